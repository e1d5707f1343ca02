"""Parameterised exponential-cone programs over Shannon-strategy test channels.

Both programs optimise a row-stochastic matrix A[y, u] = P(u|y). With
p(y, z) fixed by a jammer, I(U;Y|Z) = sum p(y,z) A[y,u] log(A[y,u] / B[z,u])
where B[z, u] = sum_y p(y|z) A[y, u]; each term is a relative entropy of
two expressions affine in A, which keeps both programs DPP-compliant so they
compile once per instance.
"""
from __future__ import annotations

import warnings
from collections import OrderedDict

import cvxpy as cp
import numpy as np

LN2 = np.log(2.0)
_OK = {cp.OPTIMAL, cp.OPTIMAL_INACCURATE}
_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 32


def conditional_rate_weights(pyz: np.ndarray, nu: int):
    """Per-z weights (W_z, N_z) such that the program's objective equals I(U;Y|Z)."""
    pz = pyz.sum(axis=0)
    ws, ns = [], []
    for z in range(pyz.shape[1]):
        col = pyz[:, z]
        ws.append(np.repeat(col[:, None], nu, axis=1))
        ns.append(np.outer(col, col / pz[z]) if pz[z] > 0 else np.zeros((col.size, col.size)))
    return ws, ns


def _rate_expr(A, wps, nps):
    return sum(cp.sum(cp.rel_entr(cp.multiply(w, A), n @ A)) for w, n in zip(wps, nps)) / LN2


class WynerZivProgram:
    """min I(U;Y|Z) s.t. E[d] <= D for one fixed jammer."""

    def __init__(self, ny: int, nz: int, nu: int):
        self.shape = (ny, nu)
        self.A = cp.Variable((ny, nu), nonneg=True)
        self.E = cp.Parameter((ny, nu))
        self.D = cp.Parameter()
        self.W = [cp.Parameter((ny, nu), nonneg=True) for _ in range(nz)]
        self.N = [cp.Parameter((ny, ny), nonneg=True) for _ in range(nz)]
        cons = [cp.sum(self.A, axis=1) == 1, cp.sum(cp.multiply(self.E, self.A)) <= self.D]
        self.problem = cp.Problem(cp.Minimize(_rate_expr(self.A, self.W, self.N)), cons)

    def solve(self, pyz: np.ndarray, E: np.ndarray, D: float) -> np.ndarray | None:
        ws, ns = conditional_rate_weights(pyz, self.shape[1])
        for p, v in zip(self.W, ws):
            p.value = v
        for p, v in zip(self.N, ns):
            p.value = v
        self.E.value = E
        self.D.value = float(D)
        return _solve(self.problem, self.A)


class MinimaxProgram:
    """min_A max_{Q in S} I_Q(U;Y|Z) subject to the robust distortion constraint.

    ``K[x, j, y, u]`` holds E[d(x, u(Z)) | x, j, y]; the constraint
    sum_x p(x) max_j <K[x, j], A> <= D is written with one epigraph variable
    per source symbol. ``slots`` fixes how many jammers S may hold.
    """

    def __init__(self, p_x: np.ndarray, K: np.ndarray, nz: int, slots: int):
        nx, nj, ny, nu = K.shape
        self.shape = (ny, nu)
        self.slots = slots
        self.A = cp.Variable((ny, nu), nonneg=True)
        self.t = cp.Variable()
        s = cp.Variable(nx)
        self.D = cp.Parameter()
        self.W = [[cp.Parameter((ny, nu), nonneg=True) for _ in range(nz)] for _ in range(slots)]
        self.N = [[cp.Parameter((ny, ny), nonneg=True) for _ in range(nz)] for _ in range(slots)]
        Kmat = K.reshape(nx * nj, ny * nu)
        flat = cp.reshape(self.A, (ny * nu,), order="C")
        cons = [
            cp.sum(self.A, axis=1) == 1,
            Kmat @ flat <= np.repeat(np.eye(nx), nj, axis=0) @ s,
            p_x @ s <= self.D,
        ]
        cons += [self.t >= _rate_expr(self.A, self.W[k], self.N[k]) for k in range(slots)]
        self.problem = cp.Problem(cp.Minimize(self.t), cons)

    def solve(self, pyzs: list[np.ndarray], D: float):
        pyzs = list(pyzs)
        if not pyzs:
            raise ValueError("need at least one jammer")
        for k in range(self.slots):
            ws, ns = conditional_rate_weights(pyzs[k % len(pyzs)], self.shape[1])
            for p, v in zip(self.W[k], ws):
                p.value = v
            for p, v in zip(self.N[k], ns):
                p.value = v
        self.D.value = float(D)
        A = _solve(self.problem, self.A)
        if A is None:
            return None, np.inf
        return A, float(self.t.value)


_ATTEMPTS = (
    (cp.CLARABEL, {}),
    # shorter steps and looser tolerances rescue the interior-point method on thin feasible sets
    (cp.CLARABEL, {"max_step_fraction": 0.9}),
    (cp.CLARABEL, {"max_iter": 400, "static_regularization_constant": 1e-6,
                   "tol_gap_abs": 1e-6, "tol_gap_rel": 1e-6, "tol_feas": 1e-6}),
)


def _solve(problem: cp.Problem, A: cp.Variable) -> np.ndarray | None:
    for solver, opts in _ATTEMPTS:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=solver, **opts)
        except cp.SolverError:
            continue
        if problem.status in _OK and A.value is not None:
            return clean_rows(np.maximum(A.value, 0.0))
    return None


def clean_rows(A: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    A = np.where(A > floor, A, 0.0)
    sums = A.sum(axis=1, keepdims=True)
    return A / sums


def cached(key, factory):
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    obj = factory()
    _CACHE[key] = obj
    if len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return obj
