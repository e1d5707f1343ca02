"""Type-based binned random codes for the jammed remote-source problem, and a Monte Carlo harness.

One codebook per type of the encoder's observation. The encoder sends the
type index and a bin index; the decoder lists every codeword in that bin
that looks jointly typical with its side information under some jamming
type consistent with the announced observation type, and keeps the list
only if it is a singleton.

Random streams: codebook entry for type t uses ``default_rng([seed, 1, t])``
and trial k uses ``default_rng([seed, 0, k])``, so results do not depend on
how trials are scheduled across threads.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import TestChannel
from .distortion import compute_D1, jammer_costs, worst_case_distortion
from .errors import CapExceeded
from .instance import ProblemInstance
from .probability import entropy_bits
from .typekit import all_conditional_types, enumerate_types

CODEWORD_CAP = 2**20
CONDITIONAL_TYPE_CAP = 10**6
# threshold tests are inclusive up to float noise, so exact lattice ties always pass
TEST_TOL = 1e-12


@dataclass(frozen=True)
class SlackSchedule:
    eps: float
    f_of_eps: float
    delta: float
    delta2: float
    gamma: float

    def __post_init__(self):
        for name in ("eps", "f_of_eps", "delta", "delta2", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"slack {name} must be positive, got {getattr(self, name)}")

    @classmethod
    def from_eps(cls, eps: float, sizes: dict, *, delta: float | None = None, f_of_eps: float | None = None,
                 delta2: float | None = None, gamma: float | None = None) -> "SlackSchedule":
        """Default schedule f = eps, delta = eps/2, delta2 = 2 delta, gamma = 4 delta |X||J||Y|.

        ``delta`` may be set independently of ``eps``; delta2 and gamma then
        follow it unless overridden too.
        """
        delta = eps / 2 if delta is None else delta
        return cls(
            eps=eps,
            f_of_eps=eps if f_of_eps is None else f_of_eps,
            delta=delta,
            delta2=2 * delta if delta2 is None else delta2,
            gamma=4 * delta * sizes["X"] * sizes["J"] * sizes["Y"] if gamma is None else gamma,
        )


# ---------------------------------------------------------------------------
# Codebook
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CodebookEntry:
    type_index: int
    t_y: np.ndarray  # counts over Y
    r_u: float
    r_tilde: float
    codewords: np.ndarray  # (N, n) symbols of U
    bins: tuple  # tuple of index arrays, ascending within each bin
    bin_of: np.ndarray
    pos_in_bin: np.ndarray
    candidates: tuple  # conditional types T_{J|X} passing the marginal test
    targets: np.ndarray  # (C, |U|, |Z|): [P_X T W P_{U|Y}]_{U,Z} per candidate

    @property
    def n_codewords(self) -> int:
        return self.codewords.shape[0]

    @property
    def n_bins(self) -> int:
        return len(self.bins)


@dataclass(frozen=True, eq=False)
class Codebook:
    inst: ProblemInstance
    tc: TestChannel
    n: int
    slack: SlackSchedule
    seed: int
    types: tuple
    entries: tuple
    index: dict

    def entry_for(self, y) -> CodebookEntry:
        counts = np.bincount(np.asarray(y), minlength=self.inst.ny)
        return self.entries[self.index[tuple(int(c) for c in counts)]]

    @property
    def header_rate(self) -> float:
        return math.log2(len(self.types)) / self.n

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(e.codewords.tobytes())
            h.update(e.bin_of.tobytes())
        return h.hexdigest()[:16]


def _count(rate: float, n: int) -> int:
    return max(1, int(round(2.0 ** (n * rate))))


def _mi_bits(joint: np.ndarray) -> float:
    """I(A;B) for a 2-D joint pmf."""
    value = entropy_bits(joint.sum(axis=1)) + entropy_bits(joint.sum(axis=0)) - entropy_bits(joint)
    return max(float(value), 0.0)


def y_marginal(inst: ProblemInstance, q: np.ndarray) -> np.ndarray:
    return np.einsum("x,xj,xjy->y", inst.p_x, q, inst.w_y)


def uz_joint(inst: ProblemInstance, q: np.ndarray, p_u_given_y: np.ndarray) -> np.ndarray:
    """[P_X Q W P_{U|Y}]_{U,Z} as (|U|, |Z|)."""
    return np.einsum("x,xj,xjyz,yu->uz", inst.p_x, q, inst.w, p_u_given_y)


def conditional_type_pool(inst: ProblemInstance, n: int, cap: int = CONDITIONAL_TYPE_CAP):
    """Distinct jamming kernels T_{J|X} realisable at block length n, with their Y-marginals."""
    kernels = np.array([ct.kernel for ct in all_conditional_types(n, inst.nx, inst.nj, cap)])
    marg = np.einsum("x,cxj,xjy->cy", inst.p_x, kernels, inst.w_y)
    return kernels, marg


def candidate_jamming_types(inst: ProblemInstance, t_y, n: int, f_of_eps: float, pool=None):
    """Kernels T_{J|X} on the length-n lattice with ||[P_X T W]_Y - t_y||_inf <= f_of_eps."""
    kernels, marg = conditional_type_pool(inst, n) if pool is None else pool
    t = np.asarray(getattr(t_y, "pmf", t_y), dtype=float)
    if t.sum() > 1.0 + 1e-9:
        t = t / t.sum()
    keep = np.abs(marg - t).max(axis=1) <= f_of_eps + TEST_TOL
    return kernels[keep]


def build_codebook(inst: ProblemInstance, tc: TestChannel, n: int, slack: SlackSchedule, seed: int,
                   *, cap: int = CODEWORD_CAP, type_cap: int = CONDITIONAL_TYPE_CAP) -> Codebook:
    """Binned codebooks for every type of Y^n, drawn i.i.d. from [T_Y P_{U|Y}]_U."""
    A = tc.p_u_given_y
    nu = A.shape[1]
    types = enumerate_types(n, inst.ny, cap=type_cap)
    pool = conditional_type_pool(inst, n, type_cap)
    entries = []
    for t_index, t in enumerate(types):
        rng = np.random.default_rng([seed, 1, t_index])
        t_pmf = t.pmf
        joint_yu = t_pmf[:, None] * A
        p_u = joint_yu.sum(axis=0)
        r_u = _mi_bits(joint_yu) + slack.eps / 4
        cands = candidate_jamming_types(inst, t_pmf, n, slack.f_of_eps, pool)
        targets = np.einsum("x,cxj,xjyz,yu->cuz", inst.p_x, cands, inst.w, A) if len(cands) else np.zeros((0, nu, inst.nz))
        if len(cands):
            r_tilde = max(0.0, min(_mi_bits(tg) for tg in targets) - slack.eps / 4)
        else:
            r_tilde = 0.0
        n_code = _count(r_u, n)
        n_bins = _count(r_u - r_tilde, n)
        if n_code > cap:
            raise CapExceeded(f"type {t.key()} needs {n_code} codewords, cap is {cap}")
        cdf = np.cumsum(p_u)
        cdf[-1] = 1.0
        codewords = np.searchsorted(cdf, rng.random((n_code, n)), side="right").astype(np.int16)
        perm = rng.permutation(n_code)
        bins = tuple(np.sort(b) for b in np.array_split(perm, n_bins))
        bin_of = np.empty(n_code, dtype=np.int64)
        pos = np.empty(n_code, dtype=np.int64)
        for m, b in enumerate(bins):
            bin_of[b] = m
            pos[b] = np.arange(b.size)
        for arr in (codewords, bin_of, pos, targets):
            arr.setflags(write=False)
        entries.append(CodebookEntry(t_index, t.counts, r_u, r_tilde, codewords, bins, bin_of, pos,
                                     tuple(cands), targets))
    index = {t.key(): i for i, t in enumerate(types)}
    return Codebook(inst, tc, n, slack, seed, tuple(types), tuple(entries), index)


# ---------------------------------------------------------------------------
# Encoder and decoder
# ---------------------------------------------------------------------------


def _pair_types(cw: np.ndarray, other: np.ndarray, nu: int, no: int) -> np.ndarray:
    """Joint types of every row of ``cw`` with the fixed sequence ``other``: (N, nu, no)."""
    N, n = cw.shape
    flat = (np.arange(N)[:, None] * (nu * no) + cw.astype(np.int64) * no + other[None, :]).ravel()
    return np.bincount(flat, minlength=N * nu * no).reshape(N, nu, no) / n


@dataclass(frozen=True)
class Encoded:
    type_index: int
    bin: int
    codeword: int  # index into the entry's codeword array
    e_enc: bool


def encode(cb: Codebook, y, rng: np.random.Generator) -> Encoded:
    """Codeword jointly typical with y at slack delta2; random among ties, (1,1) when none."""
    y = np.asarray(y, dtype=np.int64)
    entry = cb.entry_for(y)
    nu = cb.tc.p_u_given_y.shape[1]
    target = (cb.tc.p_u_given_y * entry.t_y[:, None] / cb.n).T  # (u, y)
    dev = np.abs(_pair_types(entry.codewords, y, nu, cb.inst.ny) - target).max(axis=(1, 2))
    ok = np.flatnonzero(dev <= cb.slack.delta2 + TEST_TOL)
    if ok.size == 0:
        first = int(entry.bins[0][0])
        return Encoded(entry.type_index, 0, first, True)
    pick = int(ok[rng.integers(ok.size)]) if ok.size > 1 else int(ok[0])
    return Encoded(entry.type_index, int(entry.bin_of[pick]), pick, False)


@dataclass(frozen=True)
class Decoded:
    codeword: int
    u: np.ndarray
    x_hat: np.ndarray
    list_members: np.ndarray
    e_dec1: bool | None = None
    e_dec2: bool | None = None


def list_members(cb: Codebook, type_index: int, m: int, z) -> np.ndarray:
    """Codeword indices of bin m passing the gamma test for some candidate jamming type."""
    entry = cb.entries[type_index]
    members = entry.bins[m]
    if entry.targets.shape[0] == 0:
        return members[:0]
    z = np.asarray(z, dtype=np.int64)
    nu = cb.tc.p_u_given_y.shape[1]
    tuz = _pair_types(entry.codewords[members], z, nu, cb.inst.nz)  # (B, u, z)
    dist = np.full(members.size, np.inf)
    for lo in range(0, entry.targets.shape[0], 256):
        blk = entry.targets[lo : lo + 256]
        d = np.abs(tuz[:, None] - blk[None]).max(axis=(2, 3)).min(axis=1)
        dist = np.minimum(dist, d)
    return members[dist <= cb.slack.gamma + TEST_TOL]


def decode(cb: Codebook, type_index: int, m: int, z, truth: int | None = None) -> Decoded:
    """Singleton-list decoding with fallback to the first codeword of the bin."""
    entry = cb.entries[type_index]
    if not 0 <= m < entry.n_bins:
        raise ValueError(f"bin {m} out of range for type {type_index} ({entry.n_bins} bins)")
    z = np.asarray(z, dtype=np.int64)
    lst = list_members(cb, type_index, m, z)
    chosen = int(lst[0]) if lst.size == 1 else int(entry.bins[m][0])
    u = entry.codewords[chosen].astype(np.int64)
    x_hat = cb.tc.estimator[u, z]
    e1 = e2 = None
    if truth is not None:
        inlist = np.isin(lst, [truth])
        e1 = not bool(inlist.any())
        e2 = bool((~inlist).any())
    return Decoded(chosen, u, x_hat, lst, e1, e2)


# ---------------------------------------------------------------------------
# Adversaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JammingStrategy:
    kind: str
    q: np.ndarray | None = None
    mapping: np.ndarray | None = None
    budget: int = 256
    label: str = ""

    def __post_init__(self):
        if self.kind == "iid":
            q = np.asarray(self.q, dtype=float)
            if q.ndim != 2 or np.any(q < 0) or np.any(np.abs(q.sum(axis=1) - 1) > 1e-9):
                raise ValueError("iid jammer needs a stochastic |X| x |J| kernel")
            object.__setattr__(self, "q", q)
        elif self.kind == "deterministic_map":
            object.__setattr__(self, "mapping", np.asarray(self.mapping, dtype=np.int64))
        elif self.kind == "sequence_search":
            if self.budget < 0:
                raise ValueError("search budget must be nonnegative")
        else:
            raise ValueError(f"unknown jamming strategy {self.kind!r}")

    @classmethod
    def iid(cls, q, label="iid"):
        return cls("iid", q=q, label=label)

    @classmethod
    def deterministic_map(cls, mapping, label="map"):
        return cls("deterministic_map", mapping=mapping, label=label)

    @classmethod
    def sequence_search(cls, budget=256, label="search"):
        return cls("sequence_search", budget=budget, label=label)

    def describe(self) -> dict:
        out = {"kind": self.kind, "label": self.label}
        if self.q is not None:
            out["q"] = self.q.tolist()
        if self.mapping is not None:
            out["mapping"] = self.mapping.tolist()
        if self.kind == "sequence_search":
            out["budget"] = self.budget
        return out


def proxy_costs(inst: ProblemInstance) -> np.ndarray:
    """c[x, j]: expected distortion of the side-information-only minimax estimator."""
    return jammer_costs(inst, compute_D1(inst).estimator)


def apply_adversary(strategy: JammingStrategy, x, rng: np.random.Generator, inst: ProblemInstance | None = None,
                    costs: np.ndarray | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if strategy.kind == "iid":
        cdf = np.cumsum(strategy.q, axis=1)
        cdf[:, -1] = 1.0
        r = rng.random(x.size)
        return (r[:, None] >= cdf[x]).sum(axis=1).astype(np.int64)
    if strategy.kind == "deterministic_map":
        return strategy.mapping[x]
    if costs is None:
        if inst is None:
            raise ValueError("sequence_search needs the instance to score jamming sequences")
        costs = proxy_costs(inst)
    nj = costs.shape[1]
    j = rng.integers(nj, size=x.size)
    # the proxy score is a per-letter average, so a flip changes it by one cost difference
    evals = 0
    improved = True
    while improved and evals < strategy.budget:
        improved = False
        for i in rng.permutation(x.size):
            for alt in range(nj):
                if alt == j[i]:
                    continue
                if evals >= strategy.budget:
                    return j
                evals += 1
                if costs[x[i], alt] > costs[x[i], j[i]]:
                    j[i] = alt
                    improved = True
    return j


def worst_deterministic_map(inst: ProblemInstance, tc: TestChannel) -> np.ndarray:
    """Jammer map maximising the single-letter distortion of the test channel."""
    return worst_case_distortion(inst, tc.decoder, tc.p_u_given_y).jammer


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    n: int
    trials: int
    seed: int
    slack: SlackSchedule

    def __post_init__(self):
        if self.n < 1 or self.trials < 1:
            raise ValueError("need n >= 1 and trials >= 1")


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    type_index: int
    bin: int
    e_enc: bool
    e_dec1: bool
    e_dec2: bool
    distortion: float
    match: bool

    def line(self) -> str:
        return "\t".join(str(v) for v in (self.trial, self.type_index, self.bin, int(self.e_enc),
                                          int(self.e_dec1), int(self.e_dec2), repr(self.distortion)))


@dataclass(frozen=True)
class SimReport:
    n: int
    trials: int
    seed: int
    strategy: dict
    empirical_distortion: float
    distortion_stderr: float
    e_enc: float
    e_dec1: float
    e_dec2: float
    e_dec1_given_enc_ok: float
    e_dec2_given_enc_ok: float
    enc_ok_trials: int
    clean_trials: int
    clean_matches: int
    message_rate: float
    header_rate: float
    bin_rate: float
    slack: dict
    bounds: dict = field(default_factory=dict)
    records: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("records")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def log_lines(self) -> list[str]:
        header = "trial\ttype_index\tbin\tE_enc\tE_dec1\tE_dec2\tdistortion"
        return [header] + [r.line() for r in self.records]


def _sample_rows(cdf: np.ndarray, r: np.ndarray) -> np.ndarray:
    return (r[:, None] >= cdf).sum(axis=1)


def sample_block(inst: ProblemInstance, strategy: JammingStrategy, n: int, rng: np.random.Generator, costs=None):
    """Draw (x, j, y, z) for one block: source, adversary, then the memoryless channel."""
    px_cdf = np.cumsum(inst.p_x)
    px_cdf[-1] = 1.0
    x = _sample_rows(px_cdf[None, :], rng.random(n))
    j = apply_adversary(strategy, x, rng, inst, costs)
    cdf = np.cumsum(inst.w.reshape(inst.nx, inst.nj, -1)[x, j], axis=1)
    cdf[:, -1] = 1.0
    yz = _sample_rows(cdf, rng.random(n))
    return x, j, yz // inst.nz, yz % inst.nz


def trial_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0, k])


def _one_trial(cb: Codebook, strategy: JammingStrategy, k: int, costs) -> TrialRecord:
    rng = trial_rng(cb.seed, k)
    x, j, y, z = sample_block(cb.inst, strategy, cb.n, rng, costs)
    enc = encode(cb, y, rng)
    dec = decode(cb, enc.type_index, enc.bin, z, truth=enc.codeword)
    dist = float(cb.inst.d[x, dec.x_hat].sum()) / cb.n
    return TrialRecord(k, enc.type_index, enc.bin, enc.e_enc, dec.e_dec1, dec.e_dec2, dist,
                       dec.codeword == enc.codeword)


def run_trials(inst: ProblemInstance, tc: TestChannel, strategy: JammingStrategy, cfg: SimConfig, *,
               codebook: Codebook | None = None, workers: int = 1, keep_records: bool = False,
               bounds: dict | None = None) -> SimReport:
    """Monte Carlo estimate of distortion and error-event frequencies for one block length."""
    cb = codebook or build_codebook(inst, tc, cfg.n, cfg.slack, cfg.seed)
    if cb.n != cfg.n or cb.seed != cfg.seed:
        raise ValueError("codebook was built for a different block length or seed")
    costs = proxy_costs(inst) if strategy.kind == "sequence_search" else None
    chunks = np.array_split(np.arange(cfg.trials), max(1, min(cfg.trials, 8 * workers)))

    def work(ks):
        return [_one_trial(cb, strategy, int(k), costs) for k in ks]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(ks) for ks in chunks]
    records = [r for part in parts for r in part]

    d = np.array([r.distortion for r in records])
    enc_ok = np.array([not r.e_enc for r in records])
    e1 = np.array([r.e_dec1 for r in records])
    e2 = np.array([r.e_dec2 for r in records])
    clean = enc_ok & ~e1 & ~e2
    used = sorted({r.type_index for r in records})
    bin_rate = max(cb.entries[t].r_u - cb.entries[t].r_tilde for t in used)
    n_ok = int(enc_ok.sum())
    return SimReport(
        n=cfg.n, trials=cfg.trials, seed=cfg.seed, strategy=strategy.describe(),
        empirical_distortion=float(d.mean()),
        distortion_stderr=float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0,
        e_enc=float(1 - enc_ok.mean()), e_dec1=float(e1.mean()), e_dec2=float(e2.mean()),
        e_dec1_given_enc_ok=float(e1[enc_ok].mean()) if n_ok else 0.0,
        e_dec2_given_enc_ok=float(e2[enc_ok].mean()) if n_ok else 0.0,
        enc_ok_trials=n_ok, clean_trials=int(clean.sum()),
        clean_matches=int(sum(r.match for r, c in zip(records, clean) if c)),
        message_rate=bin_rate + cb.header_rate, header_rate=cb.header_rate, bin_rate=bin_rate,
        slack=asdict(cfg.slack), bounds=dict(bounds or {}),
        records=tuple(records) if keep_records else (),
    )
