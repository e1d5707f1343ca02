"""Empirical types, type enumeration and l-infinity typicality tests.

Types are kept as integer counts; the pmf is derived on demand. Conditional
types carry one denominator per conditioning symbol, and rows whose
conditioning symbol never occurs are stored as uniform.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, prod
from typing import Iterator, Sequence

import numpy as np

from .errors import CapExceeded

DEFAULT_CAP = 10**6


@dataclass(frozen=True, eq=False)
class TypeClass:
    sizes: tuple[int, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != tuple(self.sizes):
            raise ValueError(f"counts shape {counts.shape} != sizes {self.sizes}")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.n

    def key(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.counts.ravel())

    def __eq__(self, other):
        return isinstance(other, TypeClass) and self.sizes == other.sizes and self.key() == other.key()

    def __hash__(self):
        return hash((self.sizes, self.key()))


@dataclass(frozen=True, eq=False)
class ConditionalType:
    """Conditional type of ``a`` given ``b``: ``counts[b, a]`` plus row totals."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def denominators(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def defined(self) -> np.ndarray:
        return self.denominators > 0

    @property
    def kernel(self) -> np.ndarray:
        den = self.denominators
        k = self.counts.shape[1]
        safe = np.where(den > 0, den, 1)[:, None]
        return np.where(den[:, None] > 0, self.counts / safe, 1.0 / k)

    def key(self) -> tuple:
        """Hashable key identifying the kernel as exact rationals."""
        out = []
        for row, den in zip(self.counts, self.denominators):
            if den == 0:
                out.append(None)
            else:
                g = int(np.gcd.reduce(np.append(row, den)))
                out.append((int(den) // g,) + tuple(int(c) // g for c in row))
        return tuple(out)

    def kernel_key(self) -> tuple:
        """Like ``key`` but with empty rows read as the uniform row they are stored as."""
        k = self.counts.shape[1]
        return tuple((k,) + (1,) * k if row is None else row for row in self.key())


def _symbols(seq, size: int | None) -> tuple[np.ndarray, int]:
    arr = np.asarray(seq)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("sequence must be a non-empty 1-D vector")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("sequence symbols must be integers")
        arr = arr.astype(np.int64)
    size = int(arr.max()) + 1 if size is None else int(size)
    if arr.min() < 0 or arr.max() >= size:
        bad = arr[(arr < 0) | (arr >= size)][0]
        raise ValueError(f"symbol {int(bad)} outside alphabet of size {size}")
    return arr, size


def empirical_type(seq, size: int | None = None) -> TypeClass:
    arr, size = _symbols(seq, size)
    return TypeClass((size,), np.bincount(arr, minlength=size))


def joint_type(seqs: Sequence, sizes: Sequence[int] | None = None) -> TypeClass:
    seqs = list(seqs)
    if not seqs:
        raise ValueError("need at least one sequence")
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise ValueError(f"sequence lengths differ: {sorted(lengths)}")
    sizes = [None] * len(seqs) if sizes is None else list(sizes)
    arrs, dims = zip(*(_symbols(s, k) for s, k in zip(seqs, sizes)))
    flat = np.ravel_multi_index(arrs, dims)
    return TypeClass(tuple(dims), np.bincount(flat, minlength=prod(dims)).reshape(dims))


def conditional_type(seq_a, seq_b, size_a: int | None = None, size_b: int | None = None) -> ConditionalType:
    """Conditional type T_{a|b}; rows are indexed by symbols of ``seq_b``."""
    jt = joint_type([seq_b, seq_a], [size_b, size_a])
    return ConditionalType(jt.counts)


def _compositions(n: int, k: int) -> Iterator[tuple[int, ...]]:
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def type_count(n: int, k: int) -> int:
    return comb(n + k - 1, k - 1)


def enumerate_types(n: int, k: int, cap: int = DEFAULT_CAP) -> list[TypeClass]:
    """All types of length-``n`` sequences over ``k`` symbols, lexicographic in the counts."""
    if n < 0 or k < 1:
        raise ValueError(f"need n >= 0 and k >= 1, got n={n}, k={k}")
    count = type_count(n, k)
    if count > cap:
        raise CapExceeded(f"{count} types of length {n} over {k} symbols exceeds cap {cap}")
    return [TypeClass((k,), c) for c in _compositions(n, k)]


def enumerate_conditional_types(n_per_cell: Sequence[int], to_size: int, cap: int = DEFAULT_CAP) -> list[ConditionalType]:
    """Every conditional type whose conditioning type has the given per-symbol counts."""
    n_per_cell = [int(c) for c in n_per_cell]
    count = prod(type_count(c, to_size) for c in n_per_cell)
    if count > cap:
        raise CapExceeded(f"{count} conditional types exceeds cap {cap}")
    rows = [list(_compositions(c, to_size)) for c in n_per_cell]
    out = []
    for combo in _product(rows):
        out.append(ConditionalType(np.array(combo, dtype=np.int64).reshape(len(n_per_cell), to_size)))
    return out


def _product(rows):
    if not rows:
        yield ()
        return
    for head in rows[0]:
        for tail in _product(rows[1:]):
            yield (head,) + tail


def all_conditional_types(n: int, from_size: int, to_size: int, cap: int = DEFAULT_CAP) -> list[ConditionalType]:
    """Distinct kernels realisable as conditional types at block length ``n``.

    Union over every conditioning type; kernels that coincide as rationals
    (e.g. 1/2 and 2/4, or an empty row and a defined uniform row) are kept
    once, first occurrence wins.
    """
    total = sum(
        prod(type_count(c, to_size) for c in t.counts) for t in enumerate_types(n, from_size, cap)
    )
    if total > cap:
        raise CapExceeded(f"{total} conditional types at n={n} exceeds cap {cap}")
    seen, out = set(), []
    for t in enumerate_types(n, from_size, cap):
        for ct in enumerate_conditional_types(t.counts, to_size, cap):
            key = ct.kernel_key()
            if key not in seen:
                seen.add(key)
                out.append(ct)
    return out


def linf(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def is_typical(seq, p, eps: float) -> bool:
    if eps <= 0:
        raise ValueError("eps must be positive")
    p = np.asarray(getattr(p, "mass", p), dtype=float)
    t = empirical_type(seq, p.shape[0])
    return linf(t.pmf, p) <= eps


def is_jointly_typical(seqs: Sequence, joint, eps: float) -> bool:
    if eps <= 0:
        raise ValueError("eps must be positive")
    joint = np.asarray(getattr(joint, "mass", joint), dtype=float)
    if joint.ndim != len(seqs):
        raise ValueError(f"joint pmf has {joint.ndim} axes for {len(seqs)} sequences")
    t = joint_type(seqs, joint.shape)
    return linf(t.pmf, joint) <= eps
