import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockcomp.metrics import (
    BeamformerSet, full_sinr, interference_plus_noise, link_products, pessimistic_sinr,
    qol_function, rates_bits, sinr_full, sinr_report, sinr_subset, subset_products,
    subset_sinrs, surrogate_rows, taylor_surrogate, weighted_sum_rate,
)
from blockcomp.subsets import SubsetFamily, stacked_beamformer, stacked_channel

from conftest import random_complex

SETS = [(0, 1, 2), (1, 2, 3), (0, 3)]
B, K, NT = 4, 3, 2


def instance(seed):
    rng = np.random.default_rng(seed)
    serving = np.zeros((B, K), bool)
    for k, s in enumerate(SETS):
        serving[list(s), k] = True
    H = random_complex(rng, B, K, NT)
    F = random_complex(rng, B, K, NT) * serving[..., None]
    fam = SubsetFamily.build(SETS, [2, 2, 1], B)
    return rng, serving, H, F, fam


def sinr_oracle(k, mask, H, F, sigma2):
    """Stacked-vector definition: |h^H f_k|^2 / (sigma^2 + sum_{j!=k} |h^H f_j|^2)."""
    h = stacked_channel(H[:, k], mask)
    amps = [h.conj() @ F[:, j].reshape(-1) for j in range(K)]
    p = np.abs(amps) ** 2
    return p[k] / (sigma2 + p.sum() - p[k])


@given(st.integers(0, 10_000))
def test_subset_sinr_matches_stacked_oracle(seed):
    _, _, H, F, fam = instance(seed)
    sub = subset_sinrs(H, F, fam, 0.3)
    for r in range(fam.num_rows):
        k = fam.user[r]
        assert sub[r] == pytest.approx(sinr_oracle(k, fam.mask[r], H, F, 0.3), rel=1e-10)
    c = int(r - fam.rows_of(k)[0])
    assert sinr_subset(k, c, H, F, 0.3, fam) == pytest.approx(sub[r], rel=1e-12)


def test_full_sinr_is_all_kept():
    _, _, H, F, _ = instance(1)
    want = [sinr_oracle(k, np.ones(B), H, F, 1.0) for k in range(K)]
    assert np.allclose(full_sinr(H, F, 1.0), want)
    assert sinr_full(2, H, F, 1.0) == pytest.approx(want[2])


def test_pessimistic_is_min_over_rows():
    _, _, H, F, fam = instance(2)
    sub = subset_sinrs(H, F, fam, 1.0)
    pess = pessimistic_sinr(H, F, fam, 1.0)
    for k in range(K):
        assert pess[k] == sub[fam.rows_of(k)].min()
    # the last row of a user blocks nothing, so it reproduces the full-set SINR
    last = fam.rows_of(0)[-1]
    assert sub[last] == pytest.approx(full_sinr(H, F, 1.0)[0])


def test_stacked_product_shapes():
    _, serving, H, F, fam = instance(3)
    s = subset_products(link_products(H, F), fam)
    assert s.shape == (fam.num_rows, K)
    r = 4
    k = fam.user[r]
    h = stacked_channel(H[:, k], fam.mask[r])
    f = stacked_beamformer(F[:, 1], serving[:, 1])
    assert s[r, 1] == pytest.approx(h.conj() @ f)


@given(st.integers(0, 10_000), st.floats(0, 20), st.floats(0, 20))
def test_surrogate_underestimates_with_touching_point(seed, gamma, gamma0):
    rng, serving, H, F, fam = instance(seed)
    F0 = random_complex(rng, B, K, NT) * serving[..., None]
    for k in range(K):
        for c in range(fam.count(k)):
            exact = qol_function(k, c, H, F, gamma, 0.5, fam)
            approx = taylor_surrogate(k, c, H, F, gamma, F0, gamma0, 0.5, fam)
            assert approx <= exact + 1e-9 * max(1.0, abs(exact))
            at_point = taylor_surrogate(k, c, H, F0, gamma0, F0, gamma0, 0.5, fam)
            assert at_point == pytest.approx(qol_function(k, c, H, F0, gamma0, 0.5, fam), rel=1e-12)


def test_vectorized_surrogate_matches_scalar():
    rng, serving, H, F, fam = instance(7)
    F0 = random_complex(rng, B, K, NT) * serving[..., None]
    g, g0 = np.array([0.5, 2.0, 0.0]), np.array([1.0, 0.2, 3.0])
    s = subset_products(link_products(H, F), fam)
    s0 = subset_products(link_products(H, F0), fam)
    rows = surrogate_rows(s, s0, g, g0, fam, 0.5)
    for r in range(fam.num_rows):
        k = fam.user[r]
        c = int(r - fam.rows_of(k)[0])
        assert rows[r] == pytest.approx(taylor_surrogate(k, c, H, F, g[k], F0, g0[k], 0.5, fam))


def test_interference_identity():
    _, _, H, F, fam = instance(4)
    g = sinr_subset(1, 0, H, F, 0.7, fam)
    ipn = interference_plus_noise(1, 0, H, F, 0.7, fam)
    # qol at gamma = SINR equals the interference-plus-noise power
    assert qol_function(1, 0, H, F, g, 0.7, fam) == pytest.approx(ipn)


def test_negative_expansion_gamma_rejected():
    _, _, H, F, fam = instance(5)
    with pytest.raises(ValueError):
        taylor_surrogate(0, 0, H, F, 1.0, F, -0.5, 1.0, fam)


def test_rates_and_objective():
    assert weighted_sum_rate([0.0, np.e - 1], [1.0, 2.0]) == pytest.approx(2.0)
    assert np.allclose(rates_bits([1.0, 3.0]), [1.0, 2.0])
    assert weighted_sum_rate([5.0, 5.0], [0.0, 0.0]) == 0.0


def test_beamformer_set_zeroes_unserved():
    _, serving, H, F, fam = instance(6)
    bf = BeamformerSet(np.ones((B, K, NT)), serving)
    assert np.all(bf.f[~serving] == 0)
    assert np.allclose(bf.rru_power(), serving.sum(axis=1) * NT)


def test_sinr_report_rates():
    _, _, H, F, fam = instance(8)
    rep = sinr_report(H, 0.5 * H, F, fam, 1.0)
    assert np.allclose(rep.assigned_rate, np.log2(1 + rep.pessimistic))
    assert np.allclose(rep.supported_rate, np.log2(1 + full_sinr(0.5 * H, F, 1.0)))
