"""Expected and worst-case distortion, and the endpoints D0 and D1.

The adversary's problem is linear in Q_{J|X} and separates across source
symbols, so its maximum is attained by a deterministic map j*(x) picked by a
per-symbol argmax. Endpoint minimisation over estimator tables is exhaustive
below a cap and falls back to multistart coordinate descent above it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapExceeded
from .instance import ProblemInstance
from .probability import JointTensor, marginalize

TIE_TOL = 1e-12
DEFAULT_CAP = 10**7
HEURISTIC_STARTS = 32


@dataclass(frozen=True)
class DistortionMeasure:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("distortion matrix must be 2-D, finite and nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def d_max(self) -> float:
        return float(self.matrix.max())


@dataclass(frozen=True, eq=False)
class Estimator:
    """Deterministic reconstruction table over the named domain axes."""

    domain: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=np.int64)
        if table.ndim != len(self.domain):
            raise ValueError(f"table has {table.ndim} axes for domain {self.domain}")
        if np.any(table < 0):
            raise ValueError("estimator table must be total (every cell assigned a symbol)")
        table.setflags(write=False)
        object.__setattr__(self, "domain", tuple(self.domain))
        object.__setattr__(self, "table", table)

    def __eq__(self, other):
        return (
            isinstance(other, Estimator)
            and self.domain == other.domain
            and np.array_equal(self.table, other.table)
        )

    __hash__ = None


class WorstCase(NamedTuple):
    value: float
    jammer: np.ndarray


@dataclass(frozen=True, eq=False)
class Endpoint:
    value: float
    estimator: Estimator
    jammer: np.ndarray
    certified: bool = True

    def __iter__(self):
        return iter((self.value, self.estimator, self.jammer))


def _matrix(d) -> np.ndarray:
    return d.matrix if isinstance(d, DistortionMeasure) else np.asarray(d, dtype=float)


def expected_distortion(joint: JointTensor, est: Estimator, d) -> float:
    """E[d(X, est(domain))] under ``joint``."""
    d = _matrix(d)
    if "X" in est.domain:
        raise ValueError("estimator domain cannot contain X")
    marg = marginalize(joint, ("X",) + est.domain).mass
    if marg.shape[1:] != est.table.shape:
        raise ValueError(f"estimator table shape {est.table.shape} != joint domain shape {marg.shape[1:]}")
    if est.table.max() >= d.shape[1]:
        raise ValueError("estimator uses a symbol outside the reconstruction alphabet")
    return float(np.sum(marg * d[:, est.table]))


def argmax_lowest(values: np.ndarray, axis: int = -1, tol: float = TIE_TOL) -> np.ndarray:
    """Argmax along ``axis`` with near-ties resolved to the lowest index."""
    best = values.max(axis=axis, keepdims=True)
    return np.argmax(values >= best - tol, axis=axis)


def jammer_costs(inst: ProblemInstance, est: Estimator, u_chan=None) -> np.ndarray:
    """c[x, j] = E[d(x, est) | X=x, J=j]."""
    dsel = inst.d[:, est.table]
    dom = est.domain
    if dom == ("Y", "Z"):
        return np.einsum("xjyz,xyz->xj", inst.w, dsel)
    if dom == ("Z",):
        return np.einsum("xjz,xz->xj", inst.w_z, dsel)
    if dom == ("Y",):
        return np.einsum("xjy,xy->xj", inst.w_y, dsel)
    if dom == ("U", "Z"):
        if u_chan is None:
            raise ValueError("an estimator over (U, Z) needs the auxiliary channel P_{U|Y}")
        a = np.asarray(getattr(u_chan, "kernel", u_chan), dtype=float)
        return np.einsum("xjyz,yu,xuz->xj", inst.w, a, dsel)
    raise ValueError(f"unsupported estimator domain {dom}")


def worst_case_distortion(inst: ProblemInstance, est: Estimator, u_chan=None) -> WorstCase:
    """Exact max over Q_{J|X} of the expected distortion, with its maximising map."""
    c = jammer_costs(inst, est, u_chan)
    jam = argmax_lowest(c, axis=1)
    return WorstCase(_exact_value(inst, est, jam, u_chan), jam)


def _exact_value(inst: ProblemInstance, est: Estimator, jam: np.ndarray, u_chan=None) -> float:
    """Correctly rounded sum of p(x) W(y,z|x,j*(x)) d(x, x~) over every cell.

    Summation order then cannot move the reported value by an ulp.
    """
    pw = inst.p_x[:, None, None] * inst.w[np.arange(inst.nx), jam]  # (x, y, z)
    dom = est.domain
    if dom == ("U", "Z"):
        a = np.asarray(getattr(u_chan, "kernel", u_chan), dtype=float)
        terms = pw[:, :, :, None] * a[None, :, None, :] * inst.d[:, est.table].transpose(0, 2, 1)[:, None]
        return math.fsum(terms.ravel())
    if dom == ("Y", "Z"):
        dsel = inst.d[:, est.table]
    elif dom == ("Z",):
        dsel = np.broadcast_to(inst.d[:, est.table][:, None, :], pw.shape)
    else:
        dsel = np.broadcast_to(inst.d[:, est.table][:, :, None], pw.shape)
    return math.fsum((pw * dsel).ravel())


def _cell_costs(inst: ProblemInstance, domain: str) -> np.ndarray:
    """A[x, j, cell, a]: contribution of mapping observation ``cell`` to symbol ``a``."""
    if domain == "YZ":
        cells = inst.w.reshape(inst.nx, inst.nj, -1)
    else:
        cells = inst.w_z
    return cells[:, :, :, None] * inst.d[:, None, None, :]


def _table_values(A: np.ndarray, p_x: np.ndarray, tables: np.ndarray) -> np.ndarray:
    ncell = A.shape[2]
    c = A[:, :, np.arange(ncell)[None, :], tables].sum(axis=-1)  # (x, j, n)
    return np.einsum("x,xn->n", p_x, c.max(axis=1))


def _digits(idx: np.ndarray, base: int, ncell: int) -> np.ndarray:
    out = np.empty((idx.size, ncell), dtype=np.int64)
    rem = idx.copy()
    for k in range(ncell - 1, -1, -1):
        out[:, k] = rem % base
        rem //= base
    return out


def _minimax_tables(inst: ProblemInstance, domain: str, cap: int, heuristic: bool, seed: int, starts: int):
    A = _cell_costs(inst, domain)
    ncell, base = A.shape[2], inst.nxh
    total = base**ncell
    if total <= cap:
        values = np.empty(total)
        chunk = max(1, 2**18 // max(1, inst.nx * inst.nj * ncell))
        for lo in range(0, total, chunk):
            idx = np.arange(lo, min(total, lo + chunk), dtype=np.int64)
            values[lo : lo + idx.size] = _table_values(A, inst.p_x, _digits(idx, base, ncell))
        best = int(np.argmax(values <= values.min() + TIE_TOL))
        return _digits(np.array([best]), base, ncell)[0], True
    if not heuristic:
        raise CapExceeded(
            f"{base}^{ncell} = {total} estimator tables exceeds enumeration cap {cap}; "
            "enable heuristic mode for a non-certified upper bound"
        )
    best_table, best_val = None, np.inf
    for s in range(starts):
        rng = np.random.default_rng([seed, s])
        table = rng.integers(base, size=ncell)
        table, val = _coordinate_descent(A, inst.p_x, table, base)
        if val < best_val - TIE_TOL:
            best_table, best_val = table, val
    return best_table, False


def _coordinate_descent(A, p_x, table, base):
    table = table.copy()
    val = _table_values(A, p_x, table[None, :])[0]
    improved = True
    while improved:
        improved = False
        for cell in range(table.size):
            trial = np.repeat(table[None, :], base, axis=0)
            trial[:, cell] = np.arange(base)
            vals = _table_values(A, p_x, trial)
            a = int(np.argmax(vals <= vals.min() + TIE_TOL))
            if vals[a] < val - TIE_TOL:
                table, val, improved = trial[a], vals[a], True
    return table, val


def compute_D0(inst: ProblemInstance, cap: int = DEFAULT_CAP, heuristic: bool = False,
               seed: int = 0, starts: int = HEURISTIC_STARTS) -> Endpoint:
    """min over x~(y, z) of the worst-case distortion."""
    table, certified = _minimax_tables(inst, "YZ", cap, heuristic, seed, starts)
    est = Estimator(("Y", "Z"), table.reshape(inst.ny, inst.nz))
    wc = worst_case_distortion(inst, est)
    return Endpoint(wc.value, est, wc.jammer, certified)


def compute_D1(inst: ProblemInstance, cap: int = DEFAULT_CAP, heuristic: bool = False,
               seed: int = 0, starts: int = HEURISTIC_STARTS) -> Endpoint:
    """min over x~(z) of the worst-case distortion (side information only)."""
    table, certified = _minimax_tables(inst, "Z", cap, heuristic, seed, starts)
    est = Estimator(("Z",), table)
    wc = worst_case_distortion(inst, est)
    return Endpoint(wc.value, est, wc.jammer, certified)


def jammer_kernel(jam: Sequence[int], nj: int) -> np.ndarray:
    """One-hot Q_{J|X} for a deterministic map."""
    jam = np.asarray(jam, dtype=np.int64)
    q = np.zeros((jam.size, nj))
    q[np.arange(jam.size), jam] = 1.0
    return q
