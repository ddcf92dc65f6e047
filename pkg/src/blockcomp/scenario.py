"""Geometry: RRU placement, user drops and user-centric clustering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class Topology:
    rru_positions: np.ndarray  # (B, 2) meters
    user_positions: np.ndarray  # (K, 2) meters
    serving_sets: tuple[tuple[int, ...], ...]  # per user, RRU indices sorted by distance

    @property
    def num_rrus(self) -> int:
        return len(self.rru_positions)

    @property
    def num_users(self) -> int:
        return len(self.user_positions)

    def distances(self) -> np.ndarray:
        """(B, K) matrix of RRU-user distances."""
        diff = self.rru_positions[:, None, :] - self.user_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def serving_mask(self) -> np.ndarray:
        mask = np.zeros((self.num_rrus, self.num_users), dtype=bool)
        for k, s in enumerate(self.serving_sets):
            mask[list(s), k] = True
        return mask


def perimeter_positions(n: int, width: float, height: float) -> np.ndarray:
    """`n` points equally spaced along the rectangle perimeter, starting at a
    half step from the origin corner so no RRU sits exactly in a corner."""
    perimeter = 2.0 * (width + height)
    arc = (np.arange(n) + 0.5) * perimeter / n
    pts = np.empty((n, 2))
    for i, s in enumerate(arc):
        if s < width:
            pts[i] = (s, 0.0)
        elif s < width + height:
            pts[i] = (width, s - width)
        elif s < 2 * width + height:
            pts[i] = (width - (s - width - height), height)
        else:
            pts[i] = (0.0, height - (s - 2 * width - height))
    return pts


def nearest_serving_sets(rru_positions: np.ndarray, user_positions: np.ndarray,
                         size: int) -> tuple[tuple[int, ...], ...]:
    diff = rru_positions[:, None, :] - user_positions[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    sets = []
    for k in range(dist.shape[1]):
        # stable sort keeps the lower RRU index first on ties
        order = np.argsort(dist[:, k], kind="stable")[:size]
        sets.append(tuple(int(b) for b in order))
    return tuple(sets)


def build_topology(cfg: SystemConfig, rng: np.random.Generator,
                   user_positions: np.ndarray | None = None) -> Topology:
    """Place RRUs on the perimeter, drop users uniformly, cluster by distance.

    ``user_positions`` skips the random drop; explicit ``cfg.serving_sets``
    replace the nearest-RRU rule.
    """
    rrus = perimeter_positions(cfg.num_rrus, cfg.area_width_m, cfg.area_height_m)
    if user_positions is None:
        users = rng.uniform((0.0, 0.0), (cfg.area_width_m, cfg.area_height_m),
                            size=(cfg.num_users, 2))
    else:
        users = np.asarray(user_positions, dtype=float).reshape(cfg.num_users, 2)
    if cfg.serving_sets is not None:
        sets = cfg.serving_sets
    else:
        sets = nearest_serving_sets(rrus, users, cfg.serving_set_size)
    return Topology(rrus, users, sets)


def link_distance(topo: Topology, b: int, k: int) -> float:
    if not (0 <= b < topo.num_rrus and 0 <= k < topo.num_users):
        raise IndexError(f"link ({b}, {k}) out of range")
    dx, dy = topo.rru_positions[b] - topo.user_positions[k]
    return float(np.hypot(dx, dy))
