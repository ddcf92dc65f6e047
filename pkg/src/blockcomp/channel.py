"""Sparse geometric mmWave channels with random LoS blockage.

Channel vectors are stored so that the received amplitude of beamformer
``f`` is ``h.conj() @ f`` (that is, h^H f).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SystemConfig
from .scenario import Topology

# path loss is evaluated at max(d, MIN_DISTANCE_M) to keep co-located drops finite
MIN_DISTANCE_M = 1.0


def steering_vector(phi: float, nt: int) -> np.ndarray:
    """Half-wavelength ULA response, unit norm, first element 1/sqrt(nt)."""
    if nt < 1:
        raise ValueError("nt must be >= 1")
    n = np.arange(nt)
    return np.exp(-1j * np.pi * n * np.sin(phi)) / np.sqrt(nt)


def steering_matrix(phis: np.ndarray, nt: int) -> np.ndarray:
    """Steering vectors for an array of angles, stacked on the last axis."""
    phis = np.asarray(phis, dtype=float)
    n = np.arange(nt)
    return np.exp(-1j * np.pi * np.sin(phis)[..., None] * n) / np.sqrt(nt)


@dataclass(frozen=True)
class LinkChannel:
    los_component: np.ndarray
    nlos_component: np.ndarray
    los_blocked: bool
    distance_m: float

    @property
    def full(self) -> np.ndarray:
        if self.los_blocked:
            return self.nlos_component.copy()
        return self.los_component + self.nlos_component


@dataclass(frozen=True)
class ChannelSet:
    """Two blockage snapshots over shared LoS/NLoS components.

    Arrays are indexed ``[b, k]`` (RRU, user); vectors lie on the last axis.
    """

    los: np.ndarray  # (B, K, Nt)
    nlos: np.ndarray  # (B, K, Nt)
    est_blocked: np.ndarray  # (B, K) bool
    tx_blocked: np.ndarray  # (B, K) bool
    distances: np.ndarray  # (B, K)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.los.shape

    def _snapshot(self, blocked: np.ndarray) -> np.ndarray:
        return np.where(blocked[..., None], 0.0, self.los) + self.nlos

    @property
    def estimation(self) -> np.ndarray:
        """Channel seen by the beamformer design."""
        return self._snapshot(self.est_blocked)

    @property
    def transmission(self) -> np.ndarray:
        """Channel during data transmission, with re-sampled blockage."""
        return self._snapshot(self.tx_blocked)

    def link(self, b: int, k: int, snapshot: str = "estimation") -> LinkChannel:
        blocked = self.est_blocked if snapshot == "estimation" else self.tx_blocked
        return LinkChannel(self.los[b, k].copy(), self.nlos[b, k].copy(),
                           bool(blocked[b, k]), float(self.distances[b, k]))

    @property
    def links(self) -> list[list[LinkChannel]]:
        B, K, _ = self.shape
        return [[self.link(b, k) for k in range(K)] for b in range(B)]

    def to_dict(self) -> dict:
        def cplx(a):
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "format": "blockcomp.channelset/1",
            "shape": list(self.shape),
            "los": cplx(self.los),
            "nlos": cplx(self.nlos),
            "est_blocked": self.est_blocked.astype(int).tolist(),
            "tx_blocked": self.tx_blocked.astype(int).tolist(),
            "distances": self.distances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelSet":
        def cplx(x):
            a = np.asarray(x, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        return cls(cplx(data["los"]), cplx(data["nlos"]),
                   np.asarray(data["est_blocked"], dtype=bool),
                   np.asarray(data["tx_blocked"], dtype=bool),
                   np.asarray(data["distances"], dtype=float))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "ChannelSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _complex_gaussian(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def _inward_normals(rru_positions: np.ndarray, width: float, height: float) -> np.ndarray:
    """Array broadside of each perimeter RRU, pointing into the area."""
    x, y = rru_positions[:, 0], rru_positions[:, 1]
    gaps = np.stack([y, width - x, height - y, x], axis=1)
    normals = np.array([[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]])
    return normals[np.argmin(gaps, axis=1)]


def los_angles(topo: Topology, cfg: SystemConfig) -> np.ndarray:
    """(B, K) LoS angles measured from each RRU's array broadside."""
    normals = _inward_normals(topo.rru_positions, cfg.area_width_m, cfg.area_height_m)
    v = topo.user_positions[None, :, :] - topo.rru_positions[:, None, :]
    n = normals[:, None, :]
    cross = n[..., 0] * v[..., 1] - n[..., 1] * v[..., 0]
    dot = np.sum(n * v, axis=-1)
    phi = np.arctan2(cross, dot)
    # users on the wall itself: clip to endfire
    return np.clip(phi, -np.pi / 2, np.pi / 2)


def link_components(distance: float, los_angle: float, cfg: SystemConfig,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    nt, m = cfg.antennas_per_rru, cfg.num_paths
    d = max(distance, MIN_DISTANCE_M)
    scale = np.sqrt(nt / m)
    gains = _complex_gaussian(rng, m)
    los = scale * gains[0] * d ** (-cfg.los_pathloss_exp) * steering_vector(los_angle, nt)
    nlos = np.zeros(nt, dtype=complex)
    if m > 1:
        phis = rng.uniform(-np.pi / 2, np.pi / 2, size=m - 1)
        nlos = scale * d ** (-cfg.nlos_pathloss_exp) * (gains[1:] @ steering_matrix(phis, nt))
    return los, nlos


def generate_link(b: int, k: int, topo: Topology, cfg: SystemConfig,
                  rng: np.random.Generator) -> LinkChannel:
    """One RRU-user link with LoS present; blockage is sampled separately."""
    d = float(topo.distances()[b, k])
    phi = float(los_angles(topo, cfg)[b, k])
    los, nlos = link_components(d, phi, cfg, rng)
    return LinkChannel(los, nlos, False, d)


def link_block_probability(d, eta):
    """Probability that the LoS path of a link of length d is blocked."""
    return 1.0 - np.exp(-np.asarray(eta) * np.asarray(d))


def sample_blockage(d, eta: float, rng: np.random.Generator):
    """True where the LoS path is blocked; LoS survives with probability exp(-eta d)."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or eta < 0:
        raise ValueError("distance and blockage density must be nonnegative")
    blocked = rng.random(d.shape) >= np.exp(-eta * d)
    return bool(blocked) if blocked.ndim == 0 else blocked


def draw_channel_set(topo: Topology, cfg: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """All links plus independent estimation-time and transmission-time blockage."""
    B, K, nt = topo.num_rrus, topo.num_users, cfg.antennas_per_rru
    dist = topo.distances()
    phis = los_angles(topo, cfg)
    los = np.empty((B, K, nt), dtype=complex)
    nlos = np.empty((B, K, nt), dtype=complex)
    for b in range(B):
        for k in range(K):
            los[b, k], nlos[b, k] = link_components(dist[b, k], phis[b, k], cfg, rng)
    est = sample_blockage(dist, cfg.blockage_density, rng)
    tx = sample_blockage(dist, cfg.blockage_density, rng)
    return ChannelSet(los, nlos, np.asarray(est, bool), np.asarray(tx, bool), dist)
