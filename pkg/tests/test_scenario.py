import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockcomp.config import ConfigError, SystemConfig, config_from_mapping, load_config, rng_for
from blockcomp.scenario import build_topology, link_distance, nearest_serving_sets, perimeter_positions


def test_noise_power_from_density():
    cfg = SystemConfig()
    expected = 10 ** ((-72 + 10 * math.log10(20e6) - 30) / 10)
    assert cfg.noise_power == pytest.approx(expected, rel=1e-12)
    assert cfg.tx_power == pytest.approx(10 ** 0.3 / 1.0 * 1.0 if False else 10 ** (3 / 10) * 1.0, rel=1e-12)


@pytest.mark.parametrize("changes", [
    dict(subset_floor=5),
    dict(serving_set_size=9),
    dict(best_response_step=0.0),
    dict(best_response_step=1.5),
    dict(subgrad_step=-1.0),
    dict(blockage_density=-0.1),
    dict(num_users=0),
    dict(user_weights=(1.0, 1.0)),
])
def test_invalid_configs_rejected(changes):
    with pytest.raises(ConfigError):
        SystemConfig(**changes)


def test_config_files_roundtrip(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text("[scenario]\nnum_users = 2\nserving_set_size = 3\nsubset_floor = 2\n"
                    "[channel]\nblockage_density = 0.01\n")
    cfg = load_config(toml)
    assert (cfg.num_users, cfg.serving_set_size, cfg.subset_floor) == (2, 3, 2)
    assert cfg.blockage_density == 0.01
    js = tmp_path / "c.json"
    js.write_text(json.dumps(cfg.to_dict()))
    assert load_config(js) == cfg


def test_unknown_and_malformed_config(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        config_from_mapping({"num_antennas": 4})
    bad = tmp_path / "bad.toml"
    bad.write_text("num_users = = 3")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        config_from_mapping({"tx_power_dbm": "loud"})


def test_perimeter_positions_on_boundary():
    pts = perimeter_positions(8, 100.0, 50.0)
    on_edge = (np.isclose(pts[:, 0], 0) | np.isclose(pts[:, 0], 100)
               | np.isclose(pts[:, 1], 0) | np.isclose(pts[:, 1], 50))
    assert on_edge.all()
    # equal arc spacing: 300 m of perimeter over 8 RRUs
    assert pts[0] == pytest.approx([18.75, 0.0])


@given(seed=st.integers(0, 2**32 - 1))
def test_topology_invariants(seed):
    cfg = SystemConfig()
    topo = build_topology(cfg, rng_for(seed))
    u = topo.user_positions
    assert np.all((u >= 0) & (u <= [cfg.area_width_m, cfg.area_height_m]))
    d = topo.distances()
    for k, s in enumerate(topo.serving_sets):
        assert len(s) == cfg.serving_set_size == len(set(s))
        # served RRUs are the closest ones
        others = [b for b in range(cfg.num_rrus) if b not in s]
        assert max(d[list(s), k]) <= min(d[others, k])
        assert link_distance(topo, s[0], k) == pytest.approx(d[s[0], k])


def test_serving_ties_prefer_lower_index():
    rrus = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 5.0]])
    users = np.array([[1.0, 0.0]])
    assert nearest_serving_sets(rrus, users, 1) == ((0,),)
    assert nearest_serving_sets(rrus, users, 2) == ((0, 1),)


def test_explicit_serving_sets_override():
    cfg = SystemConfig(num_users=2, serving_sets=((0, 1, 2, 3), (4, 5, 6, 7)))
    topo = build_topology(cfg, rng_for(1))
    assert topo.serving_sets == ((0, 1, 2, 3), (4, 5, 6, 7))


def test_link_distance_bounds():
    topo = build_topology(SystemConfig(), rng_for(0))
    with pytest.raises(IndexError):
        link_distance(topo, 8, 0)


def test_rng_streams_reproducible():
    a = rng_for(7, 3).random(4)
    assert np.array_equal(a, rng_for(7, 3).random(4))
    assert not np.array_equal(a, rng_for(7, 4).random(4))
