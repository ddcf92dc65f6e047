from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import betainc

from blockcomp import reliability as rel
from blockcomp.config import SystemConfig, rng_for
from blockcomp.scenario import build_topology


def brute_force_success(q, floor):
    """Sum over all 2^n blockage patterns with at least `floor` links alive."""
    total = 0.0
    for pattern in product([0, 1], repeat=len(q)):  # 1 = blocked
        if len(q) - sum(pattern) >= floor:
            total += np.prod([qi if bl else 1 - qi for qi, bl in zip(q, pattern)])
    return total


def test_block_probability_example():
    assert rel.link_block_prob(100.0, 0.005) == pytest.approx(0.3935, abs=5e-5)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.data())
def test_success_matches_enumeration(q, data):
    L = data.draw(st.integers(1, len(q)))
    assert rel.success_from_q(q, L) == pytest.approx(brute_force_success(q, L), abs=1e-12)


@given(st.integers(1, 8), st.floats(0, 1), st.data())
def test_equal_q_binomial(n, q, data):
    L = data.draw(st.integers(1, n))
    assert rel.success_equal_q(n, L, q) == pytest.approx(rel.success_from_q([q] * n, L), abs=1e-12)


def test_known_success_values():
    assert rel.success_equal_q(4, 3, 0.1) == pytest.approx(0.9477, abs=1e-12)
    # two links need one survivor: 1 - 0.9 * 0.8
    assert 1 - rel.success_from_q([0.9, 0.8], 1) == pytest.approx(0.72)
    assert rel.success_from_q([0.9, 0.8], 2) == pytest.approx(0.1 * 0.2)
    assert rel.outage_from_success([0.9, 0.8]) == pytest.approx(0.28)


def test_bound_closed_forms():
    assert rel.bound_from_mean_q(2, 1, 0.5) == pytest.approx(0.75, abs=1e-12)
    assert rel.bound_from_mean_q(2, 1, 0.5) == pytest.approx(1 - 0.5 ** 2, abs=1e-12)
    # Psi = 0 (every link must survive)
    assert rel.bound_from_mean_q(4, 4, 0.3) == pytest.approx(0.7 ** 4, abs=1e-12)
    assert rel.bound_from_mean_q(4, 2, 0.0) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(1, 8), st.floats(0, 1), st.data())
def test_bound_matches_incomplete_beta(n, q, data):
    L = data.draw(st.integers(1, n))
    psi = n - L
    want = betainc(n - psi, psi + 1, 1 - q)
    assert rel.bound_from_mean_q(n, L, q) == pytest.approx(want, abs=1e-9)


def test_bound_rejects_bad_inputs():
    with pytest.raises(ValueError):
        rel.bound_from_mean_q(3, 0, 0.2)
    with pytest.raises(ValueError):
        rel.bound_from_mean_q(3, 2, 1.5)


def test_area_mean_block_prob_limits():
    assert rel.area_mean_block_prob(0.0, 0.0, 0.0, 100.0, 50.0) == 0.0
    small = rel.area_mean_block_prob(0.0, 0.0, 1e-4, 10.0, 10.0)
    # for tiny eta the average is eta times the mean distance to the corner
    mean_dist = 7.6520
    assert small == pytest.approx(1e-4 * mean_dist, rel=1e-3)


def test_point_variant_is_mean_of_links():
    cfg = SystemConfig(blockage_density=0.01)
    topo = build_topology(cfg, rng_for(0))
    d = topo.distances()[list(topo.serving_sets[0]), 0]
    assert rel.mean_block_prob(0, topo, cfg, "point") == pytest.approx(np.mean(1 - np.exp(-0.01 * d)))
    with pytest.raises(ValueError):
        rel.mean_block_prob(0, topo, cfg, "median")
    assert 0 <= rel.success_upper_bound(0, topo, cfg) <= 1


def test_theory_monotone_in_floor():
    cfg = SystemConfig(blockage_density=0.005)
    topo = build_topology(cfg, rng_for(1))
    out = [rel.system_outage_theory(topo, cfg, L) for L in range(1, 5)]
    assert out == sorted(out)


def test_bernoulli_agrees_with_theory():
    cfg = SystemConfig(blockage_density=0.01)
    topo = build_topology(cfg, rng_for(2))
    p = rel.system_outage_theory(topo, cfg, 3)
    mc = rel.bernoulli_outage(topo, cfg, 40_000, np.random.default_rng(0), 3)
    assert abs(mc - p) <= 3 * np.sqrt(p * (1 - p) / 40_000)


def test_draw_drop_is_indexed_substream():
    cfg = SystemConfig()
    a, b = rel.draw_drop(cfg, 0, 3), rel.draw_drop(cfg, 0, 3)
    assert np.array_equal(a.channels.estimation, b.channels.estimation)
    assert not np.array_equal(a.channels.estimation, rel.draw_drop(cfg, 0, 4).channels.estimation)


def test_design_layouts():
    cfg = SystemConfig()
    drop = rel.draw_drop(cfg, 0, 0)
    assert rel.design_layout("kkt", drop, cfg) == (drop.topology.serving_sets, 3)
    assert rel.design_layout("full_jt", drop, cfg)[1] == 4
    sets, L = rel.design_layout("cb", drop, cfg)
    assert L == 1 and all(len(s) == 1 for s in sets)
    norms = np.linalg.norm(drop.channels.estimation, axis=2)
    assert [s[0] for s in sets] == list(np.argmax(norms, axis=0))
    with pytest.raises(ValueError):
        rel.design_layout("zf", drop, cfg)


def test_no_blockage_means_no_outage():
    cfg = SystemConfig(blockage_density=0.0, kkt_max_iters=200)
    rep = rel.monte_carlo_outage(cfg, 3)
    assert rep.outage == 0.0 and rep.failures == 0
    assert rep.outage_theory == 0.0 and rep.outage_bound == pytest.approx(0.0, abs=1e-12)
    assert rep.effective_rate == pytest.approx(rep.sum_rate)
    assert all(h.ok() for h in rep.hygiene)


def test_baselines_and_csv():
    cfg = SystemConfig(blockage_density=0.005)
    reps = [rel.monte_carlo_outage(cfg, 4, kind) for kind in rel.BASELINES]
    for r in reps:
        assert 0 <= r.outage <= 1 and r.sum_rate > 0
    text = rel.reports_csv(reps)
    lines = text.splitlines()
    assert lines[0].split(",") == list(rel.CSV_COLUMNS)
    assert len(lines) == 4
    drop = rel.draw_drop(cfg, 0, 0)
    bf = rel.baseline_beamformers("cb", drop.channels, drop.topology, cfg)
    assert np.sum(bf.serving) == cfg.num_users
    with pytest.raises(ValueError):
        rel.baseline_beamformers("kkt", drop.channels, drop.topology, cfg)


def test_failures_are_counted_not_rated():
    cfg = SystemConfig(blockage_density=0.0)

    def flaky(drops, cfg):
        out, failed = rel.design_beams("mrt", drops, cfg)
        failed[0] = True
        return out, failed

    rep = rel.monte_carlo_outage(cfg, 3, "mrt", beams_fn=flaky)
    assert rep.failures == 1
    assert rep.per_drop_sum_rate[0] == 0.0
    assert rep.sum_rate == pytest.approx(rep.per_drop_sum_rate[1:].mean())
