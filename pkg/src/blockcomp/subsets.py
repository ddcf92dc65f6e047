"""Blockage subset combinations and stacked-vector helpers."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SubsetEntry:
    available: tuple[int, ...]  # RRUs assumed unblocked, subset of the serving set
    blocked: tuple[int, ...]  # serving RRUs assumed blocked
    mask: np.ndarray  # (B,) bool; True for every RRU not in `blocked`


def subset_count(setsize: int, floor: int) -> int:
    """Number of subsets of a `setsize`-set holding at least `floor` elements."""
    if not 1 <= floor <= setsize:
        raise ValueError(f"need 1 <= floor <= setsize, got floor={floor}, setsize={setsize}")
    return sum(comb(setsize, size) for size in range(floor, setsize + 1))


def enumerate_subsets(serving_set: Sequence[int], floor: int,
                      num_rrus: int | None = None) -> list[SubsetEntry]:
    """All available-RRU subsets of size >= floor, smallest first then lexicographic.

    The order only fixes the dual-variable indexing; any order is equivalent.
    """
    members = sorted(int(b) for b in serving_set)
    if len(set(members)) != len(members):
        raise ValueError("serving set has duplicates")
    if not 1 <= floor <= len(members):
        raise ValueError(f"floor {floor} out of range for serving set of size {len(members)}")
    if num_rrus is None:
        num_rrus = max(members) + 1
    out = []
    for size in range(floor, len(members) + 1):
        for avail in combinations(members, size):
            blocked = tuple(b for b in members if b not in avail)
            mask = np.ones(num_rrus, dtype=bool)
            mask[list(blocked)] = False
            out.append(SubsetEntry(avail, blocked, mask))
    return out


@dataclass(frozen=True)
class SubsetFamily:
    """Flattened SINR-constraint rows over all users.

    Row ``r`` belongs to user ``user[r]`` and keeps RRUs ``mask[r]``.
    """

    entries: tuple[tuple[SubsetEntry, ...], ...]
    user: np.ndarray  # (R,) int
    mask: np.ndarray  # (R, B) float 0/1
    num_users: int

    @classmethod
    def build(cls, serving_sets: Sequence[Sequence[int]], floors: int | Sequence[int],
              num_rrus: int) -> "SubsetFamily":
        K = len(serving_sets)
        if isinstance(floors, (int, np.integer)):
            floors = [int(floors)] * K
        entries = tuple(tuple(enumerate_subsets(s, L, num_rrus)) for s, L in zip(serving_sets, floors))
        user = np.concatenate([np.full(len(e), k) for k, e in enumerate(entries)]).astype(int)
        mask = np.array([en.mask for e in entries for en in e], dtype=float).reshape(len(user), num_rrus)
        return cls(entries, user, mask, K)

    @property
    def num_rows(self) -> int:
        return len(self.user)

    def rows_of(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.user == k)

    def count(self, k: int) -> int:
        return len(self.entries[k])


def stacked_channel(h_user: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Concatenate mask[b] * h[b] over RRUs; ``h_user`` is (B, Nt)."""
    h_user = np.asarray(h_user)
    return (np.asarray(mask, dtype=float)[:, None] * h_user).reshape(-1)


def stacked_beamformer(f_user: np.ndarray, serving_mask: np.ndarray) -> np.ndarray:
    """Concatenate serving_mask[b] * f[b] over RRUs; ``f_user`` is (B, Nt)."""
    return stacked_channel(f_user, serving_mask)
