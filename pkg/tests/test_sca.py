import numpy as np
import pytest

from blockcomp import kkt, sca
from blockcomp.config import SystemConfig
from blockcomp.kkt import Problem

from conftest import random_complex
from oracles import coherent_jt_rate

SMALL = SystemConfig(num_rrus=4, num_users=3, antennas_per_rru=4, serving_set_size=3,
                     subset_floor=2, sca_max_iters=6)
FAST = sca.KktBackend(max_iters=300, tol=1e-4)


def small_problem(seed, drops=1):
    rng = np.random.default_rng(seed)
    sets = [(0, 1, 2), (1, 2, 3), (0, 2, 3)]
    H = [random_complex(rng, 4, 3, 4) * 1e-4 for _ in range(drops)]
    return Problem.build(H, [sets] * drops, SMALL)


def test_identity_backend_is_a_fixed_point():
    prob = small_problem(0)
    res = sca.sca_solve_problem(prob, SMALL, backend=sca.identity_backend)[0]
    assert len(res.outer_objectives) == 2
    assert res.outer_objectives[1] == pytest.approx(res.outer_objectives[0], abs=0)
    assert res.converged


def test_outer_objective_monotone_and_surrogate_feasible():
    prob = small_problem(1, drops=2)
    for res in sca.sca_solve_problem(prob, SMALL, backend=FAST):
        assert np.all(np.diff(res.outer_objectives) >= -1e-12)
        assert res.surrogate_residual <= 1e-9
        assert res.hygiene.ok()
        assert res.objective == pytest.approx(res.outer_objectives[-1])
        assert len(res.outer_index) == len(res.objective_trace)


def test_sca_improves_on_initial_point():
    prob = small_problem(2)
    res = sca.sca_solve_problem(prob, SMALL, backend=FAST)[0]
    assert res.outer_objectives[-1] > res.outer_objectives[0]


def test_restore_nonnegative_certifies_targets():
    prob = small_problem(3)
    state = kkt.init_feasible(prob)
    point = sca.ScaPoint(state.beams, state.gammas)
    # a far-away candidate whose linearized bounds go negative
    F = -3.0 * state.beams
    beams, gammas = sca.restore_nonnegative(prob, point, F)
    assert np.all(gammas >= 0)
    assert np.all(sca.surrogate_residuals(prob, beams, gammas, point) <= 1e-9)


def test_surrogate_bound_equals_sinr_at_tight_point():
    prob = small_problem(4)
    state = kkt.init_feasible(prob)
    _, s = prob.products(state.beams)
    rows = prob.row_sinr(s)
    g = prob.user_min(rows)
    bound = sca.surrogate_sinr_bound(prob, s, s, g)
    tight = np.isclose(rows, g[:, prob.user])
    assert np.allclose(bound[tight], rows[tight], rtol=1e-10)
    # elsewhere the bound is a lower estimate of the row SINR
    assert np.all(bound <= rows * (1 + 1e-10) + 1e-12)


def test_backend_failures_are_wrapped():
    def broken(point, prob, cfg, warm=None):
        raise kkt.BisectionError("no root", (0.0, 1.0))

    with pytest.raises(sca.BackendError, match="outer iteration 1"):
        sca.sca_solve_problem(small_problem(0), SMALL, backend=broken)


def test_single_antenna_single_user_uses_full_power():
    cfg = SystemConfig(num_rrus=1, num_users=1, antennas_per_rru=1, serving_set_size=1,
                       subset_floor=1)
    H = np.array([[[3e-6 + 4e-6j]]])
    res = sca.sca_solve(H, [(0,)], cfg, backend=FAST)
    assert np.sum(np.abs(res.beams.f) ** 2) == pytest.approx(cfg.tx_power, rel=1e-6)
    want = coherent_jt_rate(H[:, 0], [cfg.tx_power], cfg.noise_power)
    assert np.log2(1 + res.gammas[0]) == pytest.approx(want, rel=1e-6)


def test_batch_matches_single():
    prob = small_problem(5, drops=2)
    batch = sca.sca_solve_problem(prob, SMALL, backend=FAST)
    one = sca.sca_solve_problem(prob.take(np.array([1])), SMALL, backend=FAST)[0]
    assert np.array_equal(one.beams.f, batch[1].beams.f)
