"""Two-stage hybrid beamforming: codebook analog beams, then a digital solve.

Each RRU fixes an analog stage from the estimation snapshot. The digital
solver then runs unchanged on the effective channels seen through that
stage, and the composed beams are rated like any full-digital design.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kkt, sca
from .channel import steering_matrix
from .config import ConfigError, SystemConfig
from .kkt import Problem

MODES = ("per_user", "compromise")
DEFAULT_CODEBOOK_SIZE = 32


@dataclass(frozen=True)
class AnalogCodebook:
    beams: np.ndarray  # (M, Nt) unit-norm rows

    def __post_init__(self):
        b = np.asarray(self.beams, dtype=complex)
        if b.ndim != 2 or len(b) == 0:
            raise ValueError("codebook needs at least one beam vector")
        if not np.allclose(np.linalg.norm(b, axis=1), 1.0, atol=1e-12):
            raise ValueError("codebook beams must be unit-norm")
        object.__setattr__(self, "beams", b)

    @property
    def size(self) -> int:
        return len(self.beams)

    @property
    def nt(self) -> int:
        return self.beams.shape[1]

    @classmethod
    def steering(cls, nt: int, size: int = DEFAULT_CODEBOOK_SIZE) -> "AnalogCodebook":
        """Steering vectors on a grid uniform in sin(angle) over [-1, 1)."""
        u = -1.0 + 2.0 * np.arange(size) / size
        return cls(steering_matrix(np.arcsin(u), nt))

    @classmethod
    def standard_basis(cls, nt: int) -> "AnalogCodebook":
        return cls(np.eye(nt, dtype=complex))


@dataclass(frozen=True)
class HybridConfig:
    n_rf: int
    mode: str = "per_user"

    def validate(self, num_users: int, nt: int) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"hybrid mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "per_user" and not num_users <= self.n_rf <= nt:
            raise ConfigError(f"per-user analog beams need K <= n_rf <= Nt, got n_rf={self.n_rf}")
        if self.mode == "compromise" and self.n_rf != 1:
            raise ConfigError("the compromise analog beam uses exactly one RF chain")


def beam_gains(h: np.ndarray, codebook: AnalogCodebook) -> np.ndarray:
    """|h^H v_m|^2 for every codebook beam; ``h`` may carry leading axes."""
    return np.abs(np.asarray(h).conj() @ codebook.beams.T) ** 2


def select_beam(h: np.ndarray, codebook: AnalogCodebook) -> tuple[int, np.ndarray]:
    """Beam with the largest received power; the lowest index wins ties."""
    m = int(np.argmax(beam_gains(h, codebook)))
    return m, codebook.beams[m]


def compromise_beam(H_b: np.ndarray, codebook: AnalogCodebook) -> np.ndarray:
    """Normalized sum of each user's best beam; ``H_b`` is (K, Nt)."""
    idx = np.argmax(beam_gains(H_b, codebook), axis=1)
    total = codebook.beams[idx].sum(axis=0)
    norm = np.linalg.norm(total)
    if norm <= 1e-12:
        raise ValueError("best beams cancel exactly; no compromise direction")
    return total / norm


def per_user_columns(H_b: np.ndarray, codebook: AnalogCodebook, n_rf: int) -> np.ndarray:
    """Analog matrix (Nt, n_rf) of RRU b: each user's best beam, then the
    remaining codebook beams by total gain, skipping repeats."""
    gains = beam_gains(H_b, codebook)  # (K, M)
    order = list(np.argmax(gains, axis=1))
    order += list(np.argsort(-gains.sum(axis=0), kind="stable"))
    picked: list = []
    for m in order:
        if int(m) not in picked:
            picked.append(int(m))
        if len(picked) == n_rf:
            break
    cols = codebook.beams[picked].T
    if cols.shape[1] < n_rf:
        cols = np.concatenate([cols, np.zeros((cols.shape[0], n_rf - cols.shape[1]))], axis=1)
    return cols


def orthonormal_columns(W: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of span(W), zero-padded to W's width.

    Composed beams W f and Q g cover the same set, and ||Q g|| = ||g||, so
    the digital power budget on g is exactly the budget on the radiated beam.
    """
    Q, R = np.linalg.qr(W)
    diag = np.abs(np.diag(R))
    scale = max(float(diag.max(initial=0.0)), 1e-300)
    keep = diag > rtol * scale
    return Q * keep[None, :]


def analog_stage(H: np.ndarray, serving: np.ndarray, codebook: AnalogCodebook,
                 hcfg: HybridConfig) -> np.ndarray:
    """(B, Nt, n_rf) orthonormal analog matrices from the channels (B, K, Nt)."""
    B, K, nt = H.shape
    hcfg.validate(K, nt)
    if codebook.nt != nt:
        raise ValueError(f"codebook has {codebook.nt} antennas, channel has {nt}")
    out = np.zeros((B, nt, hcfg.n_rf), dtype=complex)
    for b in range(B):
        if hcfg.mode == "per_user":
            out[b] = orthonormal_columns(per_user_columns(H[b], codebook, hcfg.n_rf))
            continue
        users = np.flatnonzero(serving[b]) if np.any(serving[b]) else np.arange(K)
        try:
            out[b, :, 0] = compromise_beam(H[b, users], codebook)
        except ValueError:
            # cancelling beams: fall back to the first user's own best beam
            out[b, :, 0] = select_beam(H[b, users[0]], codebook)[1]
    return out


def effective_channels(H: np.ndarray, analog: np.ndarray) -> np.ndarray:
    """h_eff[b, k] = W_b^H h[b, k], so h^H W g = h_eff^H g; shape (..., B, K, n_rf)."""
    return H @ analog.conj()


def effective_channels_case1(H: np.ndarray, codebook: AnalogCodebook) -> np.ndarray:
    """Effective channels through each RRU's per-user best beams (one column per user)."""
    B, K, nt = H.shape
    W = np.stack([codebook.beams[np.argmax(beam_gains(H[b], codebook), axis=1)].T for b in range(B)])
    return effective_channels(H, W)


def compose(analog: np.ndarray, digital: np.ndarray) -> np.ndarray:
    """Radiated beams W_b g_{b,k}; analog (..., B, Nt, n_rf), digital (..., B, K, n_rf)."""
    return digital @ np.swapaxes(analog, -1, -2)


@dataclass
class HybridSolution:
    analog: np.ndarray  # (D, B, Nt, n_rf)
    digital: np.ndarray  # (D, B, K, n_rf)
    beams: np.ndarray  # (D, B, K, Nt) composed
    results: list  # digital-stage SolverResult per drop


def hybrid_solve_problem(prob: Problem, cfg: SystemConfig, hcfg: HybridConfig,
                         codebook: Optional[AnalogCodebook] = None,
                         solver: str = "kkt") -> HybridSolution:
    """Analog stage per drop, then the digital solver on the effective channels."""
    D, B, K, nt = prob.H.shape
    codebook = codebook if codebook is not None else AnalogCodebook.steering(nt)
    analog = np.stack([analog_stage(prob.H[d], prob.serving[d], codebook, hcfg) for d in range(D)])
    eff = Problem(effective_channels(prob.H, analog), prob.serving, prob.user, prob.mask,
                  prob.weights, prob.power, prob.families)
    if solver == "kkt":
        results = kkt.solve_problem(eff, cfg)
    elif solver == "sca":
        results = sca.sca_solve_problem(eff, cfg)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    digital = np.stack([r.beams.f for r in results])
    return HybridSolution(analog, digital, compose(analog, digital), results)


def hybrid_solve(H: np.ndarray, serving_sets, cfg: SystemConfig, hcfg: HybridConfig,
                 codebook: Optional[AnalogCodebook] = None, solver: str = "kkt",
                 floor: Optional[int] = None) -> HybridSolution:
    """Hybrid design for one channel ``H`` (B, K, Nt)."""
    prob = Problem.single(H, serving_sets, cfg, floor)
    return hybrid_solve_problem(prob, cfg, hcfg, codebook, solver)


def hybrid_designer(hcfg: HybridConfig, codebook: Optional[AnalogCodebook] = None,
                    solver: str = "kkt"):
    """Design hook for `reliability.monte_carlo_outage` (``beams_fn``)."""

    def design(drops: Sequence, cfg: SystemConfig):
        prob = Problem.build([d.channels.estimation for d in drops],
                             [d.topology.serving_sets for d in drops], cfg)
        sol = hybrid_solve_problem(prob, cfg, hcfg, codebook, solver)
        out = [(prob.take(np.array([i])), sol.beams[i], sol.results[i]) for i in range(len(drops))]
        return out, np.zeros(len(drops), dtype=bool)

    return design
