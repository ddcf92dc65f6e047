"""SINRs, rates and the convex-reformulation functions shared by both solvers.

Channels ``H`` and beamformers ``F`` are complex arrays shaped (B, K, Nt),
indexed [rru, user]. Beamformer blocks outside a user's serving set are
expected to be zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .subsets import SubsetFamily


@dataclass
class BeamformerSet:
    f: np.ndarray  # (B, K, Nt)
    serving: np.ndarray  # (B, K) bool

    def __post_init__(self):
        self.f = np.where(self.serving[..., None], self.f, 0.0).astype(complex)

    def rru_power(self) -> np.ndarray:
        return np.sum(np.abs(self.f) ** 2, axis=(1, 2))


def link_products(H: np.ndarray, F: np.ndarray) -> np.ndarray:
    """P[b, k, j] = h_{b,k}^H f_{b,j}."""
    return np.einsum("bkn,bjn->bkj", H.conj(), F)


def subset_products(P: np.ndarray, family: SubsetFamily) -> np.ndarray:
    """s[r, j] = (stacked masked channel of row r)^H (stacked beamformer of user j)."""
    Pu = P[:, family.user, :]  # (B, R, K)
    return np.einsum("rb,brj->rj", family.mask, Pu)


def _row_terms(s: np.ndarray, family: SubsetFamily, sigma2: float):
    power = np.abs(s) ** 2
    rows = np.arange(family.num_rows)
    signal = power[rows, family.user]
    total = sigma2 + power.sum(axis=1)
    return signal, total


def row_sinr(s: np.ndarray, family: SubsetFamily, sigma2: float) -> np.ndarray:
    """SINR of every constraint row from its subset products."""
    signal, total = _row_terms(s, family, sigma2)
    return signal / (total - signal)


def row_total(s: np.ndarray, family: SubsetFamily, sigma2: float) -> np.ndarray:
    """sigma^2 + sum_j |s[r, j]|^2, the numerator of the quadratic-over-linear term."""
    return sigma2 + np.sum(np.abs(s) ** 2, axis=1)


def per_user_min(values: np.ndarray, family: SubsetFamily) -> np.ndarray:
    out = np.full(family.num_users, np.inf)
    np.minimum.at(out, family.user, values)
    return out


def subset_sinrs(H: np.ndarray, F: np.ndarray, family: SubsetFamily, sigma2: float) -> np.ndarray:
    return row_sinr(subset_products(link_products(H, F), family), family, sigma2)


def pessimistic_sinr(H: np.ndarray, F: np.ndarray, family: SubsetFamily, sigma2: float) -> np.ndarray:
    """Minimum SINR over each user's blockage subsets."""
    return per_user_min(subset_sinrs(H, F, family, sigma2), family)


def full_sinr(H: np.ndarray, F: np.ndarray, sigma2: float) -> np.ndarray:
    """SINR of every user with all its serving RRUs active."""
    # sum over RRUs of h_{b,k}^H f_{b,j}
    s = link_products(H, F).sum(axis=0)  # (K, K)
    power = np.abs(s) ** 2
    signal = np.diag(power)
    return signal / (sigma2 + power.sum(axis=1) - signal)


def sinr_full(k: int, H: np.ndarray, F: np.ndarray, sigma2: float) -> float:
    return float(full_sinr(H, F, sigma2)[k])


def _row(family: SubsetFamily, k: int, c: int) -> int:
    return int(family.rows_of(k)[c])


def sinr_subset(k: int, c: int, H: np.ndarray, F: np.ndarray, sigma2: float,
                family: SubsetFamily) -> float:
    """SINR of user k when the serving RRUs of subset c are blocked."""
    r = _row(family, k, c)
    s = np.einsum("b,bj->j", family.mask[r], link_products(H, F)[:, k, :])
    power = np.abs(s) ** 2
    return float(power[k] / (sigma2 + power.sum() - power[k]))


def _subset_row_products(k, c, H, F, family):
    r = _row(family, k, c)
    return np.einsum("b,bj->j", family.mask[r], link_products(H, F)[:, k, :])


def interference_plus_noise(k: int, c: int, H: np.ndarray, F: np.ndarray, sigma2: float,
                            family: SubsetFamily) -> float:
    s = _subset_row_products(k, c, H, F, family)
    power = np.abs(s) ** 2
    return float(sigma2 + power.sum() - power[k])


def qol_function(k: int, c: int, H: np.ndarray, F: np.ndarray, gamma: float, sigma2: float,
                 family: SubsetFamily) -> float:
    """(sigma^2 + sum_j |h^H f_j|^2) / (1 + gamma) for row (k, c)."""
    s = _subset_row_products(k, c, H, F, family)
    return float((sigma2 + np.sum(np.abs(s) ** 2)) / (1.0 + gamma))


def taylor_surrogate(k: int, c: int, H: np.ndarray, F: np.ndarray, gamma: float,
                     F0: np.ndarray, gamma0: float, sigma2: float,
                     family: SubsetFamily) -> float:
    """First-order expansion of `qol_function` around (F0, gamma0), evaluated at (F, gamma).

    Affine in (F, gamma); a global under-estimator of the convex original.
    """
    if gamma0 < 0:
        raise ValueError("expansion point gamma must be nonnegative")
    s = _subset_row_products(k, c, H, F, family)
    s0 = _subset_row_products(k, c, H, F0, family)
    linear = 2.0 * np.sum(np.real(np.conj(s0) * (s - s0))) / (1.0 + gamma0)
    t0 = sigma2 + np.sum(np.abs(s0) ** 2)
    return float(linear + t0 / (1.0 + gamma0) * (1.0 - (gamma - gamma0) / (1.0 + gamma0)))


def surrogate_rows(s: np.ndarray, s0: np.ndarray, gammas: np.ndarray, gammas0: np.ndarray,
                   family: SubsetFamily, sigma2: float) -> np.ndarray:
    """Vectorized `taylor_surrogate` over all rows from precomputed subset products."""
    g = gammas[family.user]
    g0 = gammas0[family.user]
    linear = 2.0 * np.sum(np.real(np.conj(s0) * (s - s0)), axis=1) / (1.0 + g0)
    t0 = sigma2 + np.sum(np.abs(s0) ** 2, axis=1)
    return linear + t0 / (1.0 + g0) * (1.0 - (g - g0) / (1.0 + g0))


def interference_rows(s: np.ndarray, family: SubsetFamily, sigma2: float) -> np.ndarray:
    signal, total = _row_terms(s, family, sigma2)
    return total - signal


def weighted_sum_rate(gammas, weights) -> float:
    """sum_k w_k ln(1 + gamma_k), the optimization objective (nats)."""
    gammas = np.asarray(gammas, dtype=float)
    return float(np.dot(np.asarray(weights, dtype=float), np.log1p(gammas)))


def rates_bits(gammas) -> np.ndarray:
    return np.log2(1.0 + np.asarray(gammas, dtype=float))


@dataclass
class SinrReport:
    full: np.ndarray  # (K,) SINR with the whole serving set
    subsets: np.ndarray  # (R,) per constraint row
    pessimistic: np.ndarray  # (K,)
    assigned_rate: np.ndarray  # (K,) log2(1 + pessimistic)
    supported_rate: np.ndarray  # (K,) log2(1 + full SINR on the transmission channel)


def sinr_report(H_est: np.ndarray, H_tx: np.ndarray, F: np.ndarray, family: SubsetFamily,
                sigma2: float) -> SinrReport:
    sub = subset_sinrs(H_est, F, family, sigma2)
    pess = per_user_min(sub, family)
    return SinrReport(full_sinr(H_est, F, sigma2), sub, pess, rates_bits(pess),
                      rates_bits(full_sinr(H_tx, F, sigma2)))
