import math

import numpy as np
import pytest

from avrs import bounds as rb
from avrs.coding import (
    JammingStrategy,
    SimConfig,
    SlackSchedule,
    apply_adversary,
    build_codebook,
    candidate_jamming_types,
    conditional_type_pool,
    decode,
    encode,
    list_members,
    proxy_costs,
    run_trials,
    sample_block,
    trial_rng,
)
from avrs.instance import ProblemInstance, hamming, load_instance

import oracles

D_MID = 0.3
EPS, DELTA = 1.0, 0.032  # the schedule used for the Monte Carlo checks


@pytest.fixture(scope="module")
def bsc_jam():
    return load_instance("bsc-jam")


@pytest.fixture(scope="module")
def witness(bsc_jam):
    return rb.rate_upper_bound(bsc_jam, D_MID)


@pytest.fixture(scope="module")
def slack(bsc_jam):
    return SlackSchedule.from_eps(EPS, bsc_jam.sizes, delta=DELTA)


@pytest.fixture(scope="module")
def codebook8(bsc_jam, witness, slack):
    return build_codebook(bsc_jam, witness.test_channel, 8, slack, seed=5)


def _noiseless():
    w = np.zeros((2, 1, 2, 2))
    w[0, 0, 0, 0] = w[1, 0, 1, 1] = 1.0
    return ProblemInstance([0.5, 0.5], w, hamming(2), name="noiseless")


def _copy_tc():
    # strategy 0 is "always 0", strategy 3 is "always 1"; y picks its own constant
    return rb.TestChannel([[1.0, 0, 0, 0], [0, 0, 0, 1.0]], rb.shannon_strategies(2, 2))


def test_slack_schedule_defaults(bsc_jam):
    s = SlackSchedule.from_eps(0.2, bsc_jam.sizes)
    assert (s.f_of_eps, s.delta, s.delta2) == pytest.approx((0.2, 0.1, 0.2))
    assert s.gamma == pytest.approx(4 * 0.1 * 2 * 2 * 2)
    with pytest.raises(ValueError):
        SlackSchedule.from_eps(0.0, bsc_jam.sizes)


def test_single_letter_auxiliary_gives_one_codeword(bsc_jam):
    tc = rb.TestChannel(np.ones((2, 1)), [[0, 0]])
    cb = build_codebook(bsc_jam, tc, 8, SlackSchedule.from_eps(0.05, bsc_jam.sizes), seed=0)
    assert all(e.n_codewords == 1 and e.n_bins == 1 for e in cb.entries)
    rng = np.random.default_rng(0)
    for _ in range(20):
        enc = encode(cb, rng.integers(2, size=8), rng)
        assert enc.bin == 0 and not enc.e_enc


def test_same_seed_same_codebook(bsc_jam, witness, slack, codebook8):
    again = build_codebook(bsc_jam, witness.test_channel, 8, slack, seed=5)
    other = build_codebook(bsc_jam, witness.test_channel, 8, slack, seed=6)
    assert again.fingerprint() == codebook8.fingerprint() != other.fingerprint()


def test_codebook_sizes_follow_rates(codebook8, slack, witness):
    A = witness.test_channel.p_u_given_y
    for e in codebook8.entries:
        t = e.t_y / e.t_y.sum()
        joint = t[:, None] * A
        mi = oracles.entropy_loop(t) + oracles.entropy_loop(joint.sum(axis=0)) - oracles.entropy_loop(joint)
        assert e.r_u == pytest.approx(mi + slack.eps / 4, abs=1e-12)
        assert e.n_codewords == max(1, round(2 ** (8 * e.r_u)))
        assert e.n_bins == max(1, round(2 ** (8 * (e.r_u - e.r_tilde))))
        # bins partition the codebook
        assert sorted(np.concatenate(e.bins).tolist()) == list(range(e.n_codewords))


def _exact_candidates(inst, t_y, n, f):
    keep = []
    for kernel in oracles.conditional_kernels_exact(n, inst.nx, inst.nj):
        marg = oracles.y_marginal_loop(inst.p_x, kernel, inst.w)
        if max(abs(m - t) for m, t in zip(marg, t_y)) <= f + 1e-12:
            keep.append(kernel)
    return keep


def test_r_tilde_matches_exact_enumeration(bsc_jam, codebook8, slack, witness):
    A = witness.test_channel.p_u_given_y
    for e in codebook8.entries:
        cands = _exact_candidates(bsc_jam, e.t_y / 8, 8, slack.f_of_eps)
        assert len(cands) == len(e.candidates)
        if not cands:
            assert e.r_tilde == 0.0
            continue
        best = min(oracles.uz_mi_loop(bsc_jam.p_x, k, bsc_jam.w, A)[0] for k in cands)
        assert e.r_tilde == pytest.approx(max(0.0, best - slack.eps / 4), abs=1e-9)


def test_candidates_single_jammer_letter():
    inst = load_instance("classical-binary")
    pool = conditional_type_pool(inst, 4)
    assert len(pool[0]) == 1
    # Y = X under a uniform source, so the induced marginal is uniform
    assert len(candidate_jamming_types(inst, [0.5, 0.5], 4, 1e-9, pool)) == 1
    assert len(candidate_jamming_types(inst, [0.75, 0.25], 4, 0.2, pool)) == 0


def test_candidates_vacuous_filter(bsc_jam):
    pool = conditional_type_pool(bsc_jam, 6)
    assert len(candidate_jamming_types(bsc_jam, [1.0, 0.0], 6, 1.0, pool)) == len(pool[0])


@pytest.mark.parametrize("f", [0.05, 0.2, 0.45])
def test_candidates_independent_filter(f):
    inst = load_instance("bsc-jam-y")  # Y depends on J here, so the filter bites
    for c0 in range(9):
        t = [c0 / 8, 1 - c0 / 8]
        ours = candidate_jamming_types(inst, t, 8, f)
        ref = _exact_candidates(inst, t, 8, f)
        assert len(ours) == len(ref)
        ours_set = {tuple(np.round(k, 12).ravel()) for k in ours}
        ref_set = {tuple(round(float(v), 12) for row in k for v in row) for k in ref}
        assert ours_set == ref_set


def test_encoder_finds_planted_codeword():
    inst = _noiseless()
    cb = build_codebook(inst, _copy_tc(), 6, SlackSchedule.from_eps(0.2, inst.sizes), seed=1)
    rng = np.random.default_rng(2)
    for e in cb.entries:
        cw = e.codewords[rng.integers(e.n_codewords)]
        y = (cw == 3).astype(np.int64)  # the letter whose constant strategy is cw
        if np.bincount(y, minlength=2).tolist() != e.t_y.tolist():
            continue
        enc = encode(cb, y, rng)
        assert not enc.e_enc
        types = oracles.pair_type_loop(e.codewords[enc.codeword], y, 4, 2)
        target = (_copy_tc().p_u_given_y * (e.t_y / 6)[:, None]).T
        assert np.abs(types - target).max() <= cb.slack.delta2


def _exhaustive_enc_failure(cb, y):
    e = cb.entry_for(y)
    target = (cb.tc.p_u_given_y * (e.t_y / cb.n)[:, None]).T
    nu = target.shape[0]
    for cw in e.codewords:
        t = oracles.pair_type_loop(cw, y, nu, cb.inst.ny)
        if all(abs(t[u, b] - target[u, b]) <= cb.slack.delta2 + 1e-12 for u in range(nu) for b in range(cb.inst.ny)):
            return False
    return True


def test_encoder_failures_match_exhaustive_recheck(bsc_jam, witness, codebook8):
    strategy = JammingStrategy.iid(witness.worst_q)
    cfg = SimConfig(8, 10_000, 5, codebook8.slack)
    rep = run_trials(bsc_jam, witness.test_channel, strategy, cfg, codebook=codebook8, keep_records=True)
    for rec in rep.records:
        _, _, y, _ = sample_block(bsc_jam, strategy, 8, trial_rng(5, rec.trial))
        assert rec.e_enc == _exhaustive_enc_failure(codebook8, y)
    assert rep.e_enc == pytest.approx(np.mean([r.e_enc for r in rep.records]))


def test_decoder_singleton_bin(bsc_jam, witness):
    slack = SlackSchedule.from_eps(4.0, bsc_jam.sizes, delta=0.05, gamma=10.0)
    cb = build_codebook(bsc_jam, witness.test_channel, 6, slack, seed=3)
    z = np.zeros(6, dtype=np.int64)
    for t, e in enumerate(cb.entries):
        assert e.r_tilde == 0.0 and e.n_bins == e.n_codewords
        for m in range(e.n_bins):
            dec = decode(cb, t, m, z, truth=int(e.bins[m][0]))
            assert dec.list_members.tolist() == [int(e.bins[m][0])] == [dec.codeword]
            assert not dec.e_dec1 and not dec.e_dec2


def test_decoder_empty_list_falls_back(bsc_jam, witness):
    slack = SlackSchedule.from_eps(EPS, bsc_jam.sizes, delta=DELTA, gamma=1e-9)
    cb = build_codebook(bsc_jam, witness.test_channel, 7, slack, seed=4)
    rng = np.random.default_rng(5)
    seen = 0
    for _ in range(50):
        z = rng.integers(2, size=7)
        t = int(rng.integers(len(cb.entries)))
        e = cb.entries[t]
        m = int(rng.integers(e.n_bins))
        dec = decode(cb, t, m, z, truth=int(e.bins[m][-1]))
        if dec.list_members.size == 0:
            seen += 1
            assert dec.codeword == int(e.bins[m][0])
            assert dec.e_dec1
    assert seen > 0
    with pytest.raises(ValueError):
        decode(cb, 0, cb.entries[0].n_bins, np.zeros(7, dtype=np.int64))


def test_decoder_output_is_strategy_applied_to_z(codebook8):
    rng = np.random.default_rng(6)
    for _ in range(30):
        t = int(rng.integers(len(codebook8.entries)))
        z = rng.integers(2, size=8)
        dec = decode(codebook8, t, 0, z)
        assert dec.x_hat.tolist() == [int(codebook8.tc.estimator[u, zz]) for u, zz in zip(dec.u, z)]


def test_list_membership_matches_recheck(bsc_jam, codebook8, witness):
    A = witness.test_channel.p_u_given_y
    gamma = codebook8.slack.gamma
    rng = np.random.default_rng(7)
    for t, e in enumerate(codebook8.entries):
        targets = [oracles.uz_mi_loop(bsc_jam.p_x, k, bsc_jam.w, A)[1]
                   for k in _exact_candidates(bsc_jam, e.t_y / 8, 8, codebook8.slack.f_of_eps)]
        for m in range(e.n_bins):
            z = rng.integers(2, size=8)
            expect = []
            for c in e.bins[m]:
                tuz = oracles.pair_type_loop(e.codewords[c], z, A.shape[1], 2)
                if any(np.abs(tuz - tg).max() <= gamma + 1e-12 for tg in targets):
                    expect.append(int(c))
            assert list_members(codebook8, t, m, z).tolist() == expect


def test_adversary_examples(bsc_jam):
    rng = np.random.default_rng(8)
    x = rng.integers(2, size=50)
    classical = load_instance("classical-binary")
    for s in (JammingStrategy.iid([[1.0], [1.0]]), JammingStrategy.deterministic_map([0, 0]),
              JammingStrategy.sequence_search(budget=20)):
        assert apply_adversary(s, x, rng, classical).tolist() == [0] * 50
    assert apply_adversary(JammingStrategy.deterministic_map([0, 1]), x, rng).tolist() == x.tolist()
    g = np.array([1, 0])
    point = np.eye(2)[g]
    assert apply_adversary(JammingStrategy.iid(point), x, rng).tolist() == g[x].tolist()


def test_sequence_search_reproducible_and_improves(bsc_jam):
    x = np.random.default_rng(9).integers(2, size=40)
    costs = proxy_costs(bsc_jam)
    s = JammingStrategy.sequence_search(budget=500)
    a = apply_adversary(s, x, np.random.default_rng(10), bsc_jam)
    b = apply_adversary(s, x, np.random.default_rng(10), bsc_jam, costs)
    assert a.tolist() == b.tolist()
    start = apply_adversary(JammingStrategy.sequence_search(budget=0), x, np.random.default_rng(10), bsc_jam)
    assert costs[x, a].mean() >= costs[x, start].mean()
    # enough budget reaches a per-letter maximiser
    assert np.allclose(costs[x, a], costs[x].max(axis=1))


def test_strategy_validation():
    with pytest.raises(ValueError):
        JammingStrategy.iid([[0.5, 0.6], [1.0, 0.0]])
    with pytest.raises(ValueError):
        JammingStrategy("bogus")


def test_lossless_chain_zero_distortion():
    inst = _noiseless()
    # a wide margin makes every bin a singleton, so decoding cannot pick a wrong codeword;
    # delta2 below 1/n forces the encoder to find an exact copy of y
    slack = SlackSchedule.from_eps(4.0, inst.sizes, delta=0.04)
    cb = build_codebook(inst, _copy_tc(), 6, slack, seed=11)
    assert all(e.n_bins == e.n_codewords for e in cb.entries)
    rep = run_trials(inst, _copy_tc(), JammingStrategy.iid([[1.0], [1.0]]), SimConfig(6, 300, 11, slack), codebook=cb)
    assert rep.e_enc == 0.0
    assert rep.empirical_distortion == 0.0


def test_single_trial_rerun_identical(bsc_jam, witness, slack):
    cfg = SimConfig(8, 1, 12, slack)
    s = JammingStrategy.sequence_search(budget=64)
    a = run_trials(bsc_jam, witness.test_channel, s, cfg, keep_records=True)
    b = run_trials(bsc_jam, witness.test_channel, s, cfg, keep_records=True)
    assert a == b and a.to_json() == b.to_json() and a.log_lines() == b.log_lines()


def test_rate_accounting(bsc_jam, witness, slack):
    for n in (4, 8, 12):
        cb = build_codebook(bsc_jam, witness.test_channel, n, slack, seed=13)
        rep = run_trials(bsc_jam, witness.test_channel, JammingStrategy.iid(witness.worst_q),
                         SimConfig(n, 200, 13, slack), codebook=cb)
        widest = max(e.r_u - e.r_tilde for e in cb.entries)
        assert rep.message_rate <= widest + rep.header_rate + 1e-12
        assert rep.header_rate == pytest.approx(math.log2(n + 1) / n)  # |Y| = 2: n+1 types
        assert rep.header_rate <= bsc_jam.ny * math.log2(n + 1) / n


def test_log_lines_format(bsc_jam, witness, codebook8):
    rep = run_trials(bsc_jam, witness.test_channel, JammingStrategy.deterministic_map([1, 0]),
                     SimConfig(8, 5, 5, codebook8.slack), codebook=codebook8, keep_records=True)
    lines = rep.log_lines()
    assert lines[0].split("\t") == ["trial", "type_index", "bin", "E_enc", "E_dec1", "E_dec2", "distortion"]
    assert len(lines) == 6 and all(len(line.split("\t")) == 7 for line in lines)


def test_codebook_mismatch_rejected(bsc_jam, witness, codebook8):
    with pytest.raises(ValueError):
        run_trials(bsc_jam, witness.test_channel, JammingStrategy.iid(witness.worst_q),
                   SimConfig(12, 5, 5, codebook8.slack), codebook=codebook8)
