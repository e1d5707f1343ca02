"""Maximin lower and minimax upper bounds on the adversarial rate-distortion function.

Test channels live on the Shannon-strategy alphabet: each auxiliary symbol u
is a map Z -> X~ and the decoder outputs u(z). On that alphabet the fixed-
jammer rate F(D, Q) is a convex program in P_{U|Y}, and so is the outer
minimisation of the upper bound once the inner maximisation over jammers is
restricted to a finite set; only that inner maximisation is grid-limited.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _conic
from .distortion import Endpoint, Estimator, compute_D0, compute_D1, jammer_kernel, worst_case_distortion
from .errors import InfeasibleTarget
from .instance import ProblemInstance
from .probability import Alphabet, CondDist, entropy_bits
from .typekit import enumerate_types, type_count

DEFAULT_RESOLUTION = 8
LOWER_GRID_POINTS = 729
INNER_GRID_POINTS = 20000
FEAS_TOL = 1e-12
FACTOR_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TestChannel:
    """P_{U|Y} over Shannon strategies plus the decoder table x~(u, z) = u(z)."""

    __test__ = False

    p_u_given_y: np.ndarray
    estimator: np.ndarray

    def __post_init__(self):
        a = np.array(self.p_u_given_y, dtype=float)
        e = np.array(self.estimator, dtype=np.int64)
        if a.ndim != 2 or e.ndim != 2 or a.shape[1] != e.shape[0]:
            raise ValueError("p_u_given_y is (|Y|, |U|) and estimator is (|U|, |Z|)")
        if np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("p_u_given_y rows must be distributions")
        a.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "p_u_given_y", a)
        object.__setattr__(self, "estimator", e)

    @property
    def u_alphabet(self) -> Alphabet:
        return Alphabet("U", self.p_u_given_y.shape[1])

    @property
    def decoder(self) -> Estimator:
        return Estimator(("U", "Z"), self.estimator)

    def cond(self, y_alphabet: Alphabet) -> CondDist:
        return CondDist((y_alphabet,), (self.u_alphabet,), self.p_u_given_y)


@dataclass(frozen=True, eq=False)
class BoundCertificate:
    kind: str
    rate: float
    witness: object
    certified: bool
    grid_resolution: float
    d_target: float
    test_channel: TestChannel | None = None
    worst_q: np.ndarray | None = None
    evaluations: int = 0


@dataclass(frozen=True, eq=False)
class RDCurve:
    d_grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    d0: float
    d1: float
    certified_lower: np.ndarray = field(default=None)
    grid_res_upper: np.ndarray = field(default=None)
    lower_certs: tuple = ()
    upper_certs: tuple = ()


class SpecialCase(str, enum.Enum):
    ADVERSARY_ON_Y_ONLY = "adversary_on_Y_only"
    ADVERSARY_ON_Z_ONLY = "adversary_on_Z_only"
    NONE = "none"


# ---------------------------------------------------------------------------
# Shannon strategies and single-jammer quantities
# ---------------------------------------------------------------------------


def shannon_strategies(nz: int, nxh: int) -> np.ndarray:
    """All maps Z -> X~ as rows, in lexicographic order (z = 0 most significant)."""
    return np.array(list(itertools.product(range(nxh), repeat=nz)), dtype=np.int64).reshape(-1, nz)


def strategy_index(values, nxh: int) -> int:
    idx = 0
    for v in values:
        idx = idx * nxh + int(v)
    return idx


class _Model:
    """Per-instance constants shared by every bound computation."""

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self.strategies = shannon_strategies(inst.nz, inst.nxh)
        self.nu = self.strategies.shape[0]
        # d(x, u(z)) as [x, u, z]
        self.dstrat = inst.d[:, self.strategies]
        # E[d(x, u(Z)) | x, j, y] (unnormalised in y) as [x, j, y, u]
        self.K = np.einsum("xjyz,xuz->xjyu", inst.w, self.dstrat)

    def pxyz(self, q: np.ndarray) -> np.ndarray:
        return np.einsum("x,xj,xjyz->xyz", self.inst.p_x, q, self.inst.w)

    def distortion_coeffs(self, pxyz: np.ndarray) -> np.ndarray:
        return np.einsum("xyz,xuz->yu", pxyz, self.dstrat)

    def best_deterministic(self, pxyz: np.ndarray):
        """Strategy per y reproducing the best x~(y, z) under this joint, and its distortion."""
        cost = np.einsum("xyz,xa->yza", pxyz, self.inst.d)
        table = np.argmax(cost <= cost.min(axis=2, keepdims=True) + 1e-15, axis=2)
        A = np.zeros((self.inst.ny, self.nu))
        for y in range(self.inst.ny):
            A[y, strategy_index(table[y], self.inst.nxh)] = 1.0
        return A, float(np.take_along_axis(cost, table[..., None], axis=2).sum())

    def best_constant(self, pxyz: np.ndarray):
        """Single strategy x~(z) best under this joint, and its distortion."""
        cost = np.einsum("xyz,xa->za", pxyz, self.inst.d)
        table = np.argmax(cost <= cost.min(axis=1, keepdims=True) + 1e-15, axis=1)
        A = np.zeros((self.inst.ny, self.nu))
        A[:, strategy_index(table, self.inst.nxh)] = 1.0
        return A, float(cost[np.arange(cost.shape[0]), table].sum())

    def robust_distortion(self, A: np.ndarray) -> float:
        c = np.einsum("xjyu,yu->xj", self.K, A)
        return float(self.inst.p_x @ c.max(axis=1))

    def test_channel(self, A: np.ndarray) -> TestChannel:
        return TestChannel(A, self.strategies)


def _model(inst: ProblemInstance) -> _Model:
    return _conic.cached(("model", inst.digest), lambda: _Model(inst))


def rate_for(pyz: np.ndarray, A: np.ndarray) -> np.ndarray:
    """I(U;Y|Z) in bits for joint(s) p(y, z) (leading batch axes allowed) and P_{U|Y} = A."""
    puz = np.einsum("...yz,yu->...uz", pyz, A)
    pz = pyz.sum(axis=-2)
    py = pyz.sum(axis=-1)
    h_u_given_y = py @ entropy_bits(A, axis=1)
    value = entropy_bits(puz, axis=(-2, -1)) - entropy_bits(pz, axis=-1) - h_u_given_y
    return np.maximum(value, 0.0)


def _mix_toward(A: np.ndarray, anchor: np.ndarray, excess, anchor_gap: float, check) -> np.ndarray:
    """Shift A toward a feasible anchor just far enough for ``check`` to pass."""
    if excess <= 0:
        return A
    # convexity makes this first step sufficient up to rounding; the loop absorbs the rounding
    lam = min(1.0, excess / anchor_gap) if anchor_gap > 0 else 1.0
    step = 1e-12
    while True:
        mixed = (1 - lam) * A + lam * anchor
        if check(mixed) or lam >= 1.0:
            return mixed
        lam, step = min(1.0, lam + step), step * 4


def _wz_solve(model: _Model, pxyz: np.ndarray, d_target: float):
    """F(D, Q) for the joint ``pxyz``; returns (rate, A)."""
    inst = model.inst
    A_const, d_const = model.best_constant(pxyz)
    if d_target >= d_const:
        return 0.0, A_const
    A_det, d_min = model.best_deterministic(pxyz)
    if d_target < d_min - FEAS_TOL:
        raise InfeasibleTarget(f"distortion {d_target:.6g} is below the floor {d_min:.6g} for this jammer")
    pyz = pxyz.sum(axis=0)
    E = model.distortion_coeffs(pxyz)

    def dist(M):
        return float(np.sum(E * M))

    def use_slack(M):
        # I is convex and vanishes at A_const, so spending leftover distortion on A_const never hurts
        gap = d_const - dist(M)
        lam = 0.0 if gap <= 0 else max(0.0, (d_target - dist(M)) / gap)
        return (1 - lam) * M + lam * A_const

    candidates = [use_slack(A_det)]
    prog = _conic.cached(("wz", inst.ny, inst.nz, model.nu), lambda: _conic.WynerZivProgram(inst.ny, inst.nz, model.nu))
    A = prog.solve(pyz, E, d_target)
    if A is not None:
        A = _mix_toward(A, A_det, dist(A) - d_target, dist(A) - d_min, lambda M: dist(M) <= d_target)
        candidates.append(use_slack(A))
    rates = [float(rate_for(pyz, M)) for M in candidates]
    best = int(np.argmin(rates))
    return rates[best], candidates[best]


def wyner_ziv_rate(inst: ProblemInstance, q, d_target: float) -> tuple[float, TestChannel]:
    """F(D, Q): the least I(U;Y|Z) meeting E[d] <= D against the i.i.d. jammer Q."""
    model = _model(inst)
    q = np.asarray(getattr(q, "kernel", q), dtype=float)
    rate, A = _wz_solve(model, model.pxyz(q), float(d_target))
    return rate, model.test_channel(A)


def distortion_floor(inst: ProblemInstance, q) -> tuple[float, float]:
    """(least distortion with (Y, Z), least distortion with Z only) against the jammer Q."""
    model = _model(inst)
    pxyz = model.pxyz(np.asarray(getattr(q, "kernel", q), dtype=float))
    return model.best_deterministic(pxyz)[1], model.best_constant(pxyz)[1]


# ---------------------------------------------------------------------------
# Jammer grids and local search
# ---------------------------------------------------------------------------


def grid_steps(nx: int, nj: int, max_points: int, resolution: int = DEFAULT_RESOLUTION) -> int:
    """Finest steps-per-unit k <= resolution whose product grid has at most max_points points."""
    k = resolution
    while k > 1 and type_count(k, nj) ** nx > max_points:
        k -= 1
    return k


def q_grid(nx: int, nj: int, k: int) -> np.ndarray:
    """Every Q_{J|X} whose rows are multiples of 1/k, as (N, |X|, |J|)."""
    rows = np.array([t.counts for t in enumerate_types(k, nj)], dtype=float) / k
    idx = np.array(list(itertools.product(range(rows.shape[0]), repeat=nx)), dtype=np.int64)
    return rows[idx]


def _softmax_rows(theta: np.ndarray, nx: int, nj: int) -> np.ndarray:
    t = theta.reshape(nx, nj)
    t = t - t.max(axis=1, keepdims=True)
    e = np.exp(t)
    return e / e.sum(axis=1, keepdims=True)


def _ascend(fun, q0: np.ndarray, maxfev: int):
    """Nelder-Mead ascent of ``fun`` over Q in softmax coordinates, started at q0."""
    nx, nj = q0.shape
    theta0 = np.log(q0 + 1e-2).ravel()
    dim = theta0.size
    simplex = np.vstack([theta0] + [theta0 + 1.0 * np.eye(dim)[i] for i in range(dim)])
    res = minimize(
        lambda th: -fun(_softmax_rows(th, nx, nj)),
        theta0,
        method="Nelder-Mead",
        options={"maxfev": maxfev, "initial_simplex": simplex, "xatol": 1e-6, "fatol": 1e-10},
    )
    return _softmax_rows(res.x, nx, nj), -res.fun, res.nfev


def _distinct_best(values: np.ndarray, count: int) -> np.ndarray:
    order = np.argsort(-values, kind="stable")
    return order[:count]


def max_over_jammers(inst: ProblemInstance, A: np.ndarray, *, resolution: int = DEFAULT_RESOLUTION,
                     max_points: int = INNER_GRID_POINTS, starts: int = 4, maxfev: int = 300,
                     extra_q=()):
    """Grid plus local ascent for max_Q I_Q(U;Y|Z) at fixed P_{U|Y}; returns (value, Q, k)."""
    k = grid_steps(inst.nx, inst.nj, max_points, resolution)
    grid = q_grid(inst.nx, inst.nj, k)
    if len(extra_q):
        grid = np.concatenate([grid, np.asarray(extra_q, dtype=float).reshape(-1, inst.nx, inst.nj)])
    values = np.empty(len(grid))
    for lo in range(0, len(grid), 4096):
        block = grid[lo : lo + 4096]
        pyz = np.einsum("x,nxj,xjyz->nyz", inst.p_x, block, inst.w)
        values[lo : lo + len(block)] = rate_for(pyz, A)
    best = int(np.argmax(values))
    best_val, best_q = float(values[best]), grid[best]
    if inst.nj > 1 and starts > 0:
        def fun(q):
            return float(rate_for(np.einsum("x,xj,xjyz->yz", inst.p_x, q, inst.w), A))

        for i in _distinct_best(values, starts):
            q, v, _ = _ascend(fun, grid[i], maxfev)
            if v > best_val + 1e-12:
                best_val, best_q = v, q
    return best_val, best_q, k


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------


def _endpoints(inst, endpoints):
    if endpoints is None:
        return compute_D0(inst), compute_D1(inst)
    return endpoints


def _zero_certificate(kind: str, inst: ProblemInstance, model: _Model, d1: Endpoint, d_target: float):
    A = np.zeros((inst.ny, model.nu))
    A[:, strategy_index(d1.estimator.table, inst.nxh)] = 1.0
    q = jammer_kernel(d1.jammer, inst.nj)
    witness = q if kind == "lower" else model.test_channel(A)
    return BoundCertificate(kind, 0.0, witness, True, 0.0, d_target,
                            test_channel=model.test_channel(A), worst_q=q)


def rate_lower_bound(inst: ProblemInstance, d_target: float, *, resolution: int = DEFAULT_RESOLUTION,
                     max_points: int = LOWER_GRID_POINTS, refine_starts: int = 8, refine_maxfev: int = 60,
                     endpoints=None) -> BoundCertificate:
    """max_Q F(D, Q) over a jammer grid refined by Nelder-Mead.

    Every evaluated jammer gives a valid lower bound, so the result is always
    certified; ``grid_resolution`` records the grid spacing used.
    """
    d0, d1 = _endpoints(inst, endpoints)
    model = _model(inst)
    d_target = float(d_target)
    if d_target < d0.value - FEAS_TOL:
        raise InfeasibleTarget(f"distortion {d_target:.6g} is below D0 = {d0.value:.6g}")
    if d_target >= d1.value:
        return _zero_certificate("lower", inst, model, d1, d_target)
    k = grid_steps(inst.nx, inst.nj, max_points, resolution)
    grid = q_grid(inst.nx, inst.nj, k)
    rates = np.empty(len(grid))
    channels = []
    for i, q in enumerate(grid):
        rates[i], A = _wz_solve(model, model.pxyz(q), d_target)
        channels.append(A)
    best = int(np.argmax(rates))
    best_rate, best_q, best_A = float(rates[best]), grid[best], channels[best]
    evals = len(grid)
    if inst.nj > 1 and refine_starts > 0:
        cache = {}

        def fun(q):
            r, A = _wz_solve(model, model.pxyz(q), d_target)
            cache[q.tobytes()] = A
            return r

        for i in _distinct_best(rates, refine_starts):
            q, r, nfev = _ascend(fun, grid[i], refine_maxfev)
            evals += nfev
            if r > best_rate + 1e-12:
                # re-solve at the returned point to pair the rate with its channel
                r, A = _wz_solve(model, model.pxyz(q), d_target)
                if r > best_rate:
                    best_rate, best_q, best_A = r, q, A
    return BoundCertificate("lower", best_rate, best_q, True, 1.0 / k, d_target,
                            test_channel=model.test_channel(best_A), worst_q=best_q, evaluations=evals)


def rate_upper_bound(inst: ProblemInstance, d_target: float, *, resolution: int = DEFAULT_RESOLUTION,
                     max_points: int = INNER_GRID_POINTS, inner_starts: int = 4, inner_maxfev: int = 300,
                     slots: int = 12, rounds: int = 30, tol: float = 1e-5, extra_q=(),
                     endpoints=None) -> BoundCertificate:
    """min over robust-feasible test channels of max_Q I(U;Y|Z), by cutting planes.

    The outer problem is solved exactly for the jammers collected so far; each
    round adds the worst jammer found for the new channel by grid search plus
    local ascent. Robust feasibility is enforced and re-checked exactly, but
    the inner maximum is only grid-guaranteed, hence ``certified=False``.
    """
    d0, d1 = _endpoints(inst, endpoints)
    model = _model(inst)
    d_target = float(d_target)
    if d_target < d0.value - FEAS_TOL:
        raise InfeasibleTarget(f"distortion {d_target:.6g} is below D0 = {d0.value:.6g}")
    if d_target >= d1.value:
        return _zero_certificate("upper", inst, model, d1, d_target)
    A0 = np.zeros((inst.ny, model.nu))
    for y in range(inst.ny):
        A0[y, strategy_index(d0.estimator.table[y], inst.nxh)] = 1.0
    extra_q = [np.asarray(q, dtype=float) for q in extra_q]
    inner = dict(resolution=resolution, max_points=max_points, starts=inner_starts, maxfev=inner_maxfev, extra_q=extra_q)

    # the robust distortion is convex in A, so this mixture of the two endpoint channels is feasible
    A1 = np.zeros_like(A0)
    A1[:, strategy_index(d1.estimator.table, inst.nxh)] = 1.0
    lam = (d_target - d0.value) / (d1.value - d0.value)
    A_mix = (1 - lam) * A0 + lam * A1
    if model.robust_distortion(A_mix) > d_target:
        A_mix = A0
    best_v, best_q, k = max_over_jammers(inst, A_mix, **inner)
    best_A = A_mix
    pool = extra_q + [best_q] + [jammer_kernel(m, inst.nj) for m in itertools.product(range(inst.nj), repeat=inst.nx)]
    active = pool[:slots]
    key = ("minimax", inst.digest, slots)
    prog = _conic.cached(key, lambda: _conic.MinimaxProgram(inst.p_x, model.K, inst.nz, slots))
    for _ in range(rounds):
        pyzs = [model.pxyz(q).sum(axis=0) for q in active]
        A, t = prog.solve(pyzs, d_target)
        if A is None:
            break
        wc = model.robust_distortion(A)
        A = _mix_toward(A, A0, wc - d_target, wc - d0.value, lambda M: model.robust_distortion(M) <= d_target)
        v, q, _ = max_over_jammers(inst, A, **inner)
        if v < best_v:
            best_v, best_q, best_A = v, q, A
        if v <= t + tol:
            break
        if len(active) < slots:
            active.append(q)
        else:
            weakest = int(np.argmin([rate_for(p, A) for p in pyzs]))
            active[weakest] = q
    tc = model.test_channel(best_A)
    return BoundCertificate("upper", best_v, tc, False, 1.0 / k, d_target,
                            test_channel=tc, worst_q=best_q)


def robust_distortion(inst: ProblemInstance, tc: TestChannel) -> float:
    """Exact worst-case distortion of a test channel over all jammers."""
    return worst_case_distortion(inst, tc.decoder, tc.p_u_given_y).value


# ---------------------------------------------------------------------------
# Special cases and curves
# ---------------------------------------------------------------------------


def factorization_residuals(inst: ProblemInstance) -> dict[str, float]:
    """l-inf residuals of W = W_{Y|X,J} P_{Z|X} and of W = P_{Y|X} W_{Z|X,J}."""
    w_y, w_z = inst.w_y, inst.w_z
    p_z = w_z.mean(axis=1, keepdims=True)
    p_y = w_y.mean(axis=1, keepdims=True)
    y_only = np.einsum("xjy,xjz->xjyz", w_y, np.broadcast_to(p_z, w_z.shape))
    z_only = np.einsum("xjy,xjz->xjyz", np.broadcast_to(p_y, w_y.shape), w_z)
    return {
        "adversary_on_Y_only": float(np.abs(inst.w - y_only).max()),
        "adversary_on_Z_only": float(np.abs(inst.w - z_only).max()),
    }


def detect_special_case(inst: ProblemInstance, tol: float = FACTOR_TOL) -> SpecialCase:
    """Which side (if either) is the only one the jammer can influence.

    When J influences nothing both factorizations hold; Y-only is reported.
    """
    res = factorization_residuals(inst)
    if res["adversary_on_Y_only"] <= tol:
        return SpecialCase.ADVERSARY_ON_Y_ONLY
    if res["adversary_on_Z_only"] <= tol:
        return SpecialCase.ADVERSARY_ON_Z_ONLY
    return SpecialCase.NONE


def default_grid(d0: float, d1: float, d_max: float, points: int = 33, above: int = 3) -> np.ndarray:
    hi = min(d1, d_max)
    inner = np.linspace(d0, hi, points) if hi > d0 else np.array([d0])
    extra = [d1 + (d_max - d1) * (i + 1) / (above + 1) for i in range(above)] if d_max > d1 else []
    return np.unique(np.concatenate([inner, np.array(extra, dtype=float)]))


def rd_curve(inst: ProblemInstance, d_grid=None, *, points: int = 33, above: int = 3,
             lower_kw: dict | None = None, upper_kw: dict | None = None) -> RDCurve:
    """Both bounds over a distortion grid.

    The raw solver outputs are tightened with two valid envelopes: an upper
    witness feasible at D stays feasible at every larger D, and a lower bound
    at D also bounds every smaller D.
    """
    d0, d1 = compute_D0(inst), compute_D1(inst)
    grid = default_grid(d0.value, d1.value, inst.d_max, points, above) if d_grid is None else np.sort(np.asarray(d_grid, dtype=float))
    lower_certs, upper_certs = [], []
    for D in grid:
        lo = rate_lower_bound(inst, D, endpoints=(d0, d1), **(lower_kw or {}))
        up = rate_upper_bound(inst, D, endpoints=(d0, d1), extra_q=[lo.witness], **(upper_kw or {}))
        lower_certs.append(lo)
        upper_certs.append(up)
    lower = np.array([c.rate for c in lower_certs])
    upper = np.array([c.rate for c in upper_certs])
    lower = np.maximum.accumulate(lower[::-1])[::-1]
    upper = np.minimum.accumulate(upper)
    return RDCurve(
        d_grid=grid, lower=lower, upper=upper, d0=d0.value, d1=d1.value,
        certified_lower=np.array([c.certified for c in lower_certs]),
        grid_res_upper=np.array([c.grid_resolution for c in upper_certs]),
        lower_certs=tuple(lower_certs), upper_certs=tuple(upper_certs),
    )
