"""Finite-alphabet distributions, joint tensors and information measures.

Everything is in bits. ``0 log 0`` is taken to be 0, so zero-probability
conditioning cells contribute nothing to conditional entropies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

STRUCT_TOL = 1e-12
JOINT_TOL = 1e-10
MAX_CELLS = 10**6


@dataclass(frozen=True)
class Alphabet:
    name: str
    size: int
    labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError(f"alphabet {self.name!r} must have size >= 1, got {self.size}")
        if self.labels is not None and len(self.labels) != self.size:
            raise ValueError(f"alphabet {self.name!r}: {len(self.labels)} labels for size {self.size}")


def _check_stochastic(arr: np.ndarray, ndim_to: int, what: str, tol: float = STRUCT_TOL):
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{what}: entries must be finite and nonnegative")
    sums = arr.reshape(arr.shape[: arr.ndim - ndim_to] + (-1,)).sum(axis=-1)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        cell = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{what}: row {cell} sums to {float(sums[cell]):.12g}, not 1")


@dataclass(frozen=True, eq=False)
class Dist:
    alphabet: Alphabet
    mass: np.ndarray

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.alphabet.size,):
            raise ValueError(f"Dist over {self.alphabet.name}: shape {mass.shape} != ({self.alphabet.size},)")
        _check_stochastic(mass, 1, f"Dist over {self.alphabet.name}")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)


@dataclass(frozen=True, eq=False)
class CondDist:
    """Stochastic kernel; ``kernel`` has shape ``given sizes + to sizes``."""

    given: tuple[Alphabet, ...]
    to: tuple[Alphabet, ...]
    kernel: np.ndarray

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=float)
        shape = tuple(a.size for a in self.given) + tuple(a.size for a in self.to)
        if kernel.shape != shape:
            raise ValueError(f"CondDist kernel shape {kernel.shape} != {shape}")
        names = "".join(a.name for a in self.to) + "|" + "".join(a.name for a in self.given)
        _check_stochastic(kernel, len(self.to), f"CondDist {names}")
        kernel.setflags(write=False)
        object.__setattr__(self, "given", tuple(self.given))
        object.__setattr__(self, "to", tuple(self.to))
        object.__setattr__(self, "kernel", kernel)


@dataclass(frozen=True, eq=False)
class JointTensor:
    axes: tuple[Alphabet, ...]
    mass: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names {names}")
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != tuple(a.size for a in axes):
            raise ValueError(f"mass shape {mass.shape} does not match axes {names}")
        if mass.size > MAX_CELLS:
            raise ValueError(f"joint has {mass.size} cells, more than {MAX_CELLS}")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > JOINT_TOL:
            raise ValueError("joint mass must be nonnegative and sum to 1")
        mass.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "mass", mass)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown axis {name!r}; have {self.names}") from None

    def __getitem__(self, name: str) -> Alphabet:
        return self.axes[self.index(name)]


def _as_names(axes: str | Iterable[str]) -> tuple[str, ...]:
    if isinstance(axes, str):
        return (axes,)
    return tuple(axes)


def compose_joint(p_x: Dist, q: CondDist, w: CondDist, u_chan: CondDist | None = None) -> JointTensor:
    """Product law P_X Q_{J|X} W_{Y,Z|X,J} [P_{U|Y}] over (X, J, Y, Z[, U])."""
    x = p_x.alphabet
    if q.given != (x,) or len(q.to) != 1:
        raise ValueError("jammer kernel must map X to a single alphabet J")
    j = q.to[0]
    if w.given != (x, j) or len(w.to) != 2:
        raise ValueError("channel must be a kernel from (X, J) to (Y, Z)")
    y, z = w.to
    mass = np.einsum("x,xj,xjyz->xjyz", p_x.mass, q.kernel, w.kernel)
    axes = (x, j, y, z)
    if u_chan is not None:
        if u_chan.given != (y,) or len(u_chan.to) != 1:
            raise ValueError("auxiliary channel must depend on Y only")
        mass = np.einsum("xjyz,yu->xjyzu", mass, u_chan.kernel)
        axes = axes + (u_chan.to[0],)
    return JointTensor(axes, mass)


def marginalize(joint: JointTensor, keep: str | Sequence[str]) -> JointTensor:
    """Sum out every axis not in ``keep``; the result's axes follow ``keep``'s order."""
    keep = _as_names(keep)
    if not keep:
        raise ValueError("keep must name at least one axis")
    if len(set(keep)) != len(keep):
        raise ValueError(f"repeated axis in {keep}")
    idx = [joint.index(k) for k in keep]
    drop = tuple(i for i in range(len(joint.axes)) if i not in idx)
    mass = joint.mass.sum(axis=drop) if drop else joint.mass
    remaining = [i for i in range(len(joint.axes)) if i in idx]
    order = [remaining.index(i) for i in idx]
    mass = np.transpose(mass, order)
    return JointTensor(tuple(joint.axes[i] for i in idx), mass)


def entropy_bits(p: np.ndarray, axis=None) -> np.ndarray | float:
    """Shannon entropy of an unnormalised-free pmf array, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=axis)


def entropy(joint: JointTensor, axes: str | Sequence[str] | None = None) -> float:
    names = joint.names if axes is None else _as_names(axes)
    if not names:
        return 0.0
    return max(float(entropy_bits(marginalize(joint, names).mass)), 0.0)


def conditional_mutual_information(joint: JointTensor, a, b, c=()) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)."""
    a, b, c = _as_names(a), _as_names(b), _as_names(c)
    if not a or not b:
        raise ValueError("a and b must be non-empty")
    sa, sb, sc = set(a), set(b), set(c)
    if sa & sb or sa & sc or sb & sc or len(sa) != len(a) or len(sb) != len(b) or len(sc) != len(c):
        raise ValueError(f"axis sets must be disjoint: {a}, {b}, {c}")
    value = entropy(joint, a + c) + entropy(joint, b + c) - entropy(joint, a + b + c) - entropy(joint, c)
    return max(value, 0.0)


def mutual_information(joint: JointTensor, a, b) -> float:
    return conditional_mutual_information(joint, a, b, ())


def as_kernel(q) -> np.ndarray:
    """Accept a CondDist or a raw array and return the kernel array."""
    return np.asarray(q.kernel if isinstance(q, CondDist) else q, dtype=float)
