import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockcomp.channel import (
    ChannelSet, LinkChannel, draw_channel_set, link_block_probability, los_angles,
    sample_blockage, steering_matrix, steering_vector,
)
from blockcomp.config import SystemConfig, rng_for
from blockcomp.scenario import build_topology


@given(phi=st.floats(-np.pi / 2, np.pi / 2), nt=st.integers(1, 32))
def test_steering_unit_norm(phi, nt):
    a = steering_vector(phi, nt)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)
    assert a[0] == pytest.approx(1 / np.sqrt(nt))
    assert np.allclose(steering_matrix(np.array([phi]), nt)[0], a)


def test_steering_broadside_is_flat():
    assert np.allclose(steering_vector(0.0, 4), np.full(4, 0.5))
    with pytest.raises(ValueError):
        steering_vector(0.0, 0)


def test_block_probability_values():
    assert link_block_probability(100.0, 0.005) == pytest.approx(0.3935, abs=1e-4)
    assert link_block_probability(50.0, 0.0) == 0.0


def test_sample_blockage_edges(rng):
    assert not sample_blockage(0.0, 0.5, rng)
    assert not np.any(sample_blockage(np.full(100, 80.0), 0.0, rng))
    with pytest.raises(ValueError):
        sample_blockage(-1.0, 0.1, rng)


def test_sample_blockage_frequency():
    rng = np.random.default_rng(3)
    n = 200_000
    hits = sample_blockage(np.full(n, 100.0), 0.005, rng).mean()
    p = link_block_probability(100.0, 0.005)
    assert abs(hits - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_snapshots_differ_only_by_blocked_los():
    cfg = SystemConfig(blockage_density=0.02)
    topo = build_topology(cfg, rng_for(0, 0))
    ch = draw_channel_set(topo, cfg, rng_for(0, 1))
    est, tx = ch.estimation, ch.transmission
    assert est.shape == (8, 4, 16)
    assert np.allclose(est[ch.est_blocked], ch.nlos[ch.est_blocked])
    assert np.allclose(tx[~ch.tx_blocked], ch.los[~ch.tx_blocked] + ch.nlos[~ch.tx_blocked])
    link = ch.link(0, 1, "transmission")
    assert isinstance(link, LinkChannel)
    assert np.allclose(link.full, tx[0, 1])


def test_los_dominates_and_decays_with_distance():
    cfg = SystemConfig(num_paths=1)
    topo = build_topology(cfg, rng_for(0))
    ch = draw_channel_set(topo, cfg, rng_for(1))
    # single path: the NLoS part is empty and |h| = |gain| d^-2 sqrt(Nt) / sqrt(Nt)
    assert np.allclose(ch.nlos, 0.0)
    norms = np.linalg.norm(ch.los, axis=2) * ch.distances ** 2
    assert np.all(norms > 0)


def test_angles_in_field_of_view():
    cfg = SystemConfig()
    topo = build_topology(cfg, rng_for(5))
    phi = los_angles(topo, cfg)
    assert np.all(np.abs(phi) <= np.pi / 2)


def test_channel_set_save_load(tmp_path):
    cfg = SystemConfig(antennas_per_rru=4)
    topo = build_topology(cfg, rng_for(2))
    ch = draw_channel_set(topo, cfg, rng_for(3))
    path = tmp_path / "ch.json"
    ch.save(path)
    back = ChannelSet.load(path)
    assert np.array_equal(back.los, ch.los) and np.array_equal(back.nlos, ch.nlos)
    assert np.array_equal(back.est_blocked, ch.est_blocked)
    assert np.array_equal(back.distances, ch.distances)


def test_channel_draw_reproducible():
    cfg = SystemConfig()
    topo = build_topology(cfg, rng_for(4))
    a = draw_channel_set(topo, cfg, rng_for(9))
    b = draw_channel_set(topo, cfg, rng_for(9))
    assert np.array_equal(a.estimation, b.estimation)
