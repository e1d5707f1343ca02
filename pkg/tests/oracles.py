"""Slow, loop-based reference computations used to check the library.

Nothing here imports the optimisation code; these reimplement each quantity
from its definition so test failures point at one side or the other.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np


def h2(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def entropy_loop(pmf) -> float:
    return -sum(float(p) * math.log2(float(p)) for p in np.ravel(pmf) if p > 0)


def brute_joint(p_x, q, w, a=None):
    """Product law by explicit loops over every symbol tuple."""
    nx, nj, ny, nz = w.shape
    nu = 1 if a is None else a.shape[1]
    out = np.zeros((nx, nj, ny, nz, nu))
    for x, j, y, z, u in itertools.product(range(nx), range(nj), range(ny), range(nz), range(nu)):
        out[x, j, y, z, u] = p_x[x] * q[x, j] * w[x, j, y, z] * (1.0 if a is None else a[y, u])
    return out if a is not None else out[..., 0]


def marginal_loop(mass, keep_axes):
    out = Counter()
    for idx in itertools.product(*(range(s) for s in mass.shape)):
        out[tuple(idx[k] for k in keep_axes)] += mass[idx]
    shape = tuple(mass.shape[k] for k in keep_axes)
    arr = np.zeros(shape)
    for k, v in out.items():
        arr[k] = v
    return arr


def cmi_kl(mass, a, b, c):
    """I(A;B|C) as sum p(a,b,c) log p(a,b,c)p(c) / (p(a,c)p(b,c)), from loops."""
    abc = marginal_loop(mass, a + b + c)
    ac = marginal_loop(mass, a + c)
    bc = marginal_loop(mass, b + c)
    cc = marginal_loop(mass, c) if c else None
    na, nb = len(a), len(b)
    total = 0.0
    for idx in itertools.product(*(range(s) for s in abc.shape)):
        p = abc[idx]
        if p <= 0:
            continue
        ia, ib, ic = idx[:na], idx[na : na + nb], idx[na + nb :]
        pc = cc[ic] if c else 1.0
        total += p * math.log2(p * pc / (ac[ia + ic] * bc[ib + ic]))
    return total


# ---------------------------------------------------------------------------
# Distortion endpoints by double enumeration
# ---------------------------------------------------------------------------


def endpoint_enumeration(p_x, w, d, domain: str):
    """min over every estimator table of max over every deterministic jammer; lowest index on ties."""
    nx, nj, ny, nz = w.shape
    nxh = d.shape[1]
    cells = list(itertools.product(range(ny), range(nz))) if domain == "YZ" else [(None, z) for z in range(nz)]
    best_val, best_table, best_jam = None, None, None
    for table in itertools.product(range(nxh), repeat=len(cells)):
        worst, worst_jam = None, None
        for jam in itertools.product(range(nj), repeat=nx):
            terms = []
            for x in range(nx):
                for y in range(ny):
                    for z in range(nz):
                        cell = cells.index((y, z)) if domain == "YZ" else z
                        terms.append(p_x[x] * w[x, jam[x], y, z] * d[x, table[cell]])
            val = math.fsum(terms)  # correctly rounded, so independent of summation order
            if worst is None or val > worst + 1e-12:
                worst, worst_jam = val, jam
        if best_val is None or worst < best_val - 1e-12:
            best_val, best_table, best_jam = worst, table, worst_jam
    return best_val, np.array(best_table), np.array(best_jam)


def expected_distortion_loop(p_x, q, w, d, table_yz):
    nx, nj, ny, nz = w.shape
    return sum(
        p_x[x] * q[x, j] * w[x, j, y, z] * d[x, table_yz[y][z]]
        for x in range(nx) for j in range(nj) for y in range(ny) for z in range(nz)
    )


# ---------------------------------------------------------------------------
# Rate-distortion references
# ---------------------------------------------------------------------------


def blahut_arimoto(p, d, target_d, iters=3000, tol=1e-13):
    """Classical R(D) in bits at distortion target_d, by bisection on the BA slope."""

    def run(s):
        q = np.full(d.shape[1], 1.0 / d.shape[1])
        for _ in range(iters):
            a = q[None, :] * np.exp(-s * d)
            cond = a / a.sum(axis=1, keepdims=True)
            q_new = p @ cond
            if np.abs(q_new - q).max() < tol:
                q = q_new
                break
            q = q_new
        a = q[None, :] * np.exp(-s * d)
        cond = a / a.sum(axis=1, keepdims=True)
        dist = float(np.sum(p[:, None] * cond * d))
        joint = p[:, None] * cond
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = float(np.nansum(joint * np.log2(joint / (p[:, None] * q[None, :]))))
        return dist, rate

    lo, hi = 0.0, 60.0
    for _ in range(80):
        mid = (lo + hi) / 2
        dist, _ = run(mid)
        if dist > target_d:
            lo = mid
        else:
            hi = mid
    return run(hi)[1]


def binary_wyner_ziv(p: float, D: float, grid: int = 20001) -> float:
    """Doubly symmetric binary source, side information through BSC(p), Hamming distortion.

    Lower convex envelope of h(p * D) - h(D) on [0, p] and the point (p, 0).
    """
    if D >= p:
        return 0.0

    def g(t):
        return h2(p * (1 - t) + t * (1 - p)) - h2(t)

    best = g(D)
    for t in np.linspace(0.0, D, grid):
        theta = (p - D) / (p - t)
        best = min(best, theta * g(t))
    return best


def compositions(n, k):
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in compositions(n - first, k - 1):
            yield (first,) + rest


def _wz_objective(pyz, A):
    joint = pyz[:, :, None] * A[:, None, :]  # (y, z, u)
    puz = joint.sum(axis=0)  # (z, u)
    pz = pyz.sum(axis=0)
    total = 0.0
    for y, z, u in itertools.product(*(range(s) for s in joint.shape)):
        if joint[y, z, u] > 0:
            total += joint[y, z, u] * math.log2(A[y, u] / (puz[z, u] / pz[z]))
    return total


def wz_multistart_minimum(pyz, E, D, nu=4, starts=40, seed=0):
    """min of I(U;Y|Z) over P_{U|Y} subject to sum(E * A) <= D, by SLSQP from random starts.

    Every returned point is feasible, so the value can only sit above the true minimum.
    """
    from scipy.optimize import minimize

    ny = pyz.shape[0]
    rng = np.random.default_rng(seed)
    cons = [{"type": "eq", "fun": lambda v, y=y: v.reshape(ny, nu)[y].sum() - 1.0} for y in range(ny)]
    cons.append({"type": "ineq", "fun": lambda v: D - float(np.sum(E * v.reshape(ny, nu)))})
    best = np.inf
    for _ in range(starts):
        x0 = rng.dirichlet(np.ones(nu), size=ny).ravel()
        res = minimize(lambda v: _wz_objective(pyz, np.clip(v.reshape(ny, nu), 1e-300, 1.0)), x0,
                       method="SLSQP", bounds=[(0.0, 1.0)] * (ny * nu), constraints=cons,
                       options={"maxiter": 300, "ftol": 1e-12})
        A = np.clip(res.x.reshape(ny, nu), 0.0, 1.0)
        A /= A.sum(axis=1, keepdims=True)
        if float(np.sum(E * A)) <= D + 1e-9:
            best = min(best, _wz_objective(pyz, A))
    return best


# ---------------------------------------------------------------------------
# Types and coding references
# ---------------------------------------------------------------------------


def histogram(seq, k):
    counts = [0] * k
    for s in seq:
        counts[int(s)] += 1
    return counts


def conditional_kernels_exact(n, nx, nj):
    """Distinct conditional types T_{J|X} at length n as exact Fraction kernels."""
    seen = {}
    for xt in compositions(n, nx):
        rows = [list(compositions(c, nj)) if c > 0 else [None] for c in xt]
        for combo in itertools.product(*rows):
            kernel = tuple(
                tuple(Fraction(1, nj) for _ in range(nj)) if r is None else tuple(Fraction(v, c) for v in r)
                for r, c in zip(combo, xt)
            )
            seen.setdefault(kernel, None)
    return list(seen)


def y_marginal_loop(p_x, kernel, w):
    nx, nj, ny, nz = w.shape
    return [sum(p_x[x] * float(kernel[x][j]) * w[x, j, y, z] for x in range(nx) for j in range(nj) for z in range(nz))
            for y in range(ny)]


def uz_mi_loop(p_x, kernel, w, a):
    nx, nj, ny, nz = w.shape
    nu = a.shape[1]
    joint = np.zeros((nu, nz))
    for x, j, y, z, u in itertools.product(range(nx), range(nj), range(ny), range(nz), range(nu)):
        joint[u, z] += p_x[x] * float(kernel[x][j]) * w[x, j, y, z] * a[y, u]
    return entropy_loop(joint.sum(axis=1)) + entropy_loop(joint.sum(axis=0)) - entropy_loop(joint), joint


def pair_type_loop(a_seq, b_seq, na, nb):
    n = len(a_seq)
    t = np.zeros((na, nb))
    for a, b in zip(a_seq, b_seq):
        t[int(a), int(b)] += 1.0 / n
    return t
