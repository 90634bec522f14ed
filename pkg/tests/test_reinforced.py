import numpy as np
import pytest

from oracles import vrjp_event_driven
from vrjp.graph import build_graph, wire
from vrjp.reinforced import (
    VrjpRecord,
    exchangeable_check,
    simulate_vrjp,
    simulate_vrjp_batch,
    simulate_vrjp_blocks,
)
from vrjp.stats import chi2_two_sample, ks_two_sample, mc_mean_stderr


def test_first_holding_law(two_vertex_wired):
    # at the start all local times are 1: s-holding ~ Exp(sum_y C_oy) and the
    # exchangeable holding is 2h + h^2
    rng = np.random.default_rng(50)
    hs, ls = [], []
    for _ in range(20_000):
        path, rec = simulate_vrjp(two_vertex_wired.conduct, 0, 0, rng)
        hs.append(rec.s_holdings[0])
        ls.append(path.holdings[0])
    total_rate = two_vertex_wired.conduct[0].sum()
    m, se = mc_mean_stderr(hs)
    assert abs(m - 1.0 / total_rate) < 4 * se
    np.testing.assert_allclose(np.asarray(ls), 2 * np.asarray(hs) + np.asarray(hs) ** 2, rtol=1e-12)


def test_first_jump_target(two_vertex_wired):
    rng = np.random.default_rng(51)
    verts, _ = simulate_vrjp_batch(two_vertex_wired.conduct, 0, 1, 20_000, rng)
    counts = np.bincount(verts[:, 1], minlength=3)
    # equal rates: (x: 1/2, delta: 1/2)
    assert counts[0] == 0
    assert abs(counts[1] / 20_000 - 0.5) < 3 * np.sqrt(0.25 / 20_000)


def test_against_event_driven_reference(asym_wired):
    # independent mechanism: competing exponential clocks per neighbor
    rng_a = np.random.default_rng(52)
    rng_b = np.random.default_rng(53)
    steps = 3
    seq_a, seq_b, hold_a, hold_b = [], [], [], []
    for _ in range(30_000):
        path, _ = simulate_vrjp(asym_wired.conduct, 0, steps, rng_a)
        seq_a.append(tuple(path.vertices.tolist()))
        hold_a.extend(path.holdings.tolist())
        v, _, l = vrjp_event_driven(asym_wired.conduct, 0, steps, rng_b)
        seq_b.append(tuple(v.tolist()))
        hold_b.extend(l.tolist())
    _, p_seq, _ = chi2_two_sample(seq_a, seq_b)
    _, p_hold = ks_two_sample(hold_a, hold_b)
    assert p_seq > 0.01
    assert p_hold > 0.01


def test_exchangeable_identity(two_vertex_wired):
    rng = np.random.default_rng(54)
    path, rec = simulate_vrjp(two_vertex_wired.conduct, 0, 50, rng)
    assert exchangeable_check(rec, path)
    assert np.all(path.holdings > 0)
    # corrupting a holding breaks the audit
    bad = VrjpRecord(rec.s_holdings, rec.local_times + 0.1)
    assert not exchangeable_check(bad, path)


def test_one_step_run_identity(two_vertex_wired):
    rng = np.random.default_rng(55)
    path, rec = simulate_vrjp(two_vertex_wired.conduct, 0, 0, rng)
    h = rec.s_holdings[0]
    assert path.holdings[0] == pytest.approx(2 * h + h * h, rel=1e-12)
    assert exchangeable_check(rec, path)


def test_batch_matches_single_law(two_vertex_wired):
    rng = np.random.default_rng(56)
    verts, holds = simulate_vrjp_batch(two_vertex_wired.conduct, 0, 4, 20_000, rng)
    singles = []
    rng2 = np.random.default_rng(57)
    for _ in range(20_000):
        p, _ = simulate_vrjp(two_vertex_wired.conduct, 0, 4, rng2)
        singles.append(tuple(p.vertices.tolist()))
    _, p_seq, _ = chi2_two_sample([tuple(r) for r in verts.tolist()], singles)
    assert p_seq > 0.01


def test_blocks_engine(two_vertex_wired):
    rng = np.random.default_rng(58)
    out = simulate_vrjp_blocks(two_vertex_wired.conduct, 0, [0], 2, 4, 200, rng)
    assert len(out) == 200
    from vrjp.reduction import kplus_reduce

    for v, h in out:
        red = kplus_reduce((v, h), [0], 2, tail_complete=False)
        assert len(red) == 4
