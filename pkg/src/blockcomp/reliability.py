"""Success and outage probabilities under random LoS blockage.

Closed forms for the probability that enough serving links survive, a
position-averaged upper bound on it, and a Monte Carlo estimator that runs a
beamforming design on one blockage snapshot and checks the assigned rates
against a second, independently blocked snapshot.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from . import kkt, sca
from .channel import ChannelSet, draw_channel_set, link_block_probability
from .config import SystemConfig, rng_for
from .kkt import BisectionError, DualContractError, Problem
from .metrics import BeamformerSet
from .scenario import Topology, build_topology
from .subsets import enumerate_subsets

# rates are compared with this slack so round-off never reads as outage
RATE_TOL = 1e-9
QUAD_RTOL = 1e-8

SOLVERS = ("kkt", "sca")
BASELINES = ("mrt", "full_jt", "cb")

SOLVER_ERRORS = (BisectionError, DualContractError, sca.BackendError, FloatingPointError)

CSV_COLUMNS = ("eta", "L", "solver", "drops", "outage", "outage_ci", "sum_rate",
               "effective_rate", "theory_outage", "bound_outage")


class QuadratureError(RuntimeError):
    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3g})")
        self.error_estimate = error_estimate


def link_block_prob(d, eta):
    """q = 1 - exp(-eta d), the LoS blocking probability of a link of length d."""
    return link_block_probability(d, eta)


def success_from_q(q: Sequence[float], floor: int) -> float:
    """Probability that at least ``floor`` of the links with blocking
    probabilities ``q`` stay unblocked, summed over the admissible subsets."""
    q = np.asarray(q, dtype=float)
    total = 0.0
    for entry in enumerate_subsets(range(len(q)), floor):
        avail = list(entry.available)
        blocked = list(entry.blocked)
        total += float(np.prod(1.0 - q[avail]) * np.prod(q[blocked]))
    return total


def success_equal_q(n: int, floor: int, q: float) -> float:
    """Binomial form for n links sharing one blocking probability q."""
    return sum(comb(n, t) * (1.0 - q) ** (n - t) * q ** t for t in range(n - floor + 1))


def _user_q(k: int, topo: Topology, cfg: SystemConfig) -> np.ndarray:
    d = topo.distances()[list(topo.serving_sets[k]), k]
    return link_block_prob(d, cfg.blockage_density)


def _floor(k: int, topo: Topology, cfg: SystemConfig, floor: Optional[int]) -> int:
    L = cfg.subset_floor if floor is None else floor
    return min(L, len(topo.serving_sets[k]))


def success_probability(k: int, topo: Topology, cfg: SystemConfig,
                        floor: Optional[int] = None) -> float:
    """Probability that user k keeps at least L unblocked serving links."""
    return success_from_q(_user_q(k, topo, cfg), _floor(k, topo, cfg, floor))


def system_outage_theory(topo: Topology, cfg: SystemConfig, floor: Optional[int] = None) -> float:
    """1 - prod_k p_k: some user loses too many links."""
    p = [success_probability(k, topo, cfg, floor) for k in range(topo.num_users)]
    return outage_from_success(p)


def outage_from_success(p: Sequence[float]) -> float:
    return float(1.0 - np.prod(np.asarray(p, dtype=float)))


def bound_from_mean_q(n: int, floor: int, q_mean: float) -> float:
    """(n - Psi) C(n, Psi) int_0^{1 - q_mean} t^(n - Psi - 1) (1 - t)^Psi dt, Psi = n - floor."""
    psi = n - floor
    if not 0 <= psi < n:
        raise ValueError(f"need 1 <= floor <= n, got floor={floor}, n={n}")
    if not 0.0 <= q_mean <= 1.0:
        raise ValueError("mean blocking probability must lie in [0, 1]")
    value, err = integrate.quad(lambda t: t ** (n - psi - 1) * (1.0 - t) ** psi,
                                0.0, 1.0 - q_mean, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    if err > max(QUAD_RTOL * abs(value), 1e-14):
        raise QuadratureError("success bound integral did not converge", err)
    return (n - psi) * comb(n, psi) * value


@lru_cache(maxsize=4096)
def area_mean_block_prob(x_b: float, y_b: float, eta: float, width: float, height: float) -> float:
    """Blocking probability of one RRU averaged over user positions in the area."""
    if eta == 0:
        return 0.0
    fn = lambda y, x: 1.0 - np.exp(-eta * np.hypot(x - x_b, y - y_b))  # noqa: E731
    value, err = integrate.dblquad(fn, 0.0, width, 0.0, height, epsabs=0.0, epsrel=QUAD_RTOL)
    if err > max(1e-6 * abs(value) * width * height, 1e-12):
        raise QuadratureError("area average did not converge", err)
    return value / (width * height)


def mean_block_prob(k: int, topo: Topology, cfg: SystemConfig, variant: str = "area") -> float:
    """Mean blocking probability over user k's serving RRUs.

    "area" averages each link over user positions in the rectangle; "point"
    uses the user's actual position.
    """
    serving = list(topo.serving_sets[k])
    if variant == "point":
        return float(np.mean(_user_q(k, topo, cfg)))
    if variant != "area":
        raise ValueError(f"unknown variant {variant!r}")
    eta = float(cfg.blockage_density)
    vals = [area_mean_block_prob(float(topo.rru_positions[b, 0]), float(topo.rru_positions[b, 1]),
                                 eta, float(cfg.area_width_m), float(cfg.area_height_m))
            for b in serving]
    return float(np.mean(vals))


def success_upper_bound(k: int, topo: Topology, cfg: SystemConfig, floor: Optional[int] = None,
                        variant: str = "area") -> float:
    """Success probability of user k from its mean blocking probability."""
    n = len(topo.serving_sets[k])
    return bound_from_mean_q(n, _floor(k, topo, cfg, floor), mean_block_prob(k, topo, cfg, variant))


def bernoulli_outage(topo: Topology, cfg: SystemConfig, draws: int, rng: np.random.Generator,
                     floor: Optional[int] = None) -> float:
    """Fraction of independent blockage draws in which some user keeps fewer
    than L unblocked serving links; no beamforming involved."""
    dist = topo.distances()
    q = link_block_prob(dist, cfg.blockage_density)
    blocked = rng.random((draws,) + dist.shape) < q
    fail = np.zeros(draws, dtype=bool)
    for k, s in enumerate(topo.serving_sets):
        alive = (~blocked[:, list(s), k]).sum(axis=1)
        fail |= alive < _floor(k, topo, cfg, floor)
    return float(fail.mean())


# ----------------------------------------------------------------------------
# drops and beamformer designs


@dataclass(frozen=True)
class Drop:
    topology: Topology
    channels: ChannelSet


def draw_drop(cfg: SystemConfig, seed: int, index: int) -> Drop:
    """Drop ``index`` of a run; each drop has its own substream."""
    rng = rng_for(seed, index)
    topo = build_topology(cfg, rng)
    return Drop(topo, draw_channel_set(topo, cfg, rng))


def strongest_rru_sets(H: np.ndarray) -> tuple[tuple[int, ...], ...]:
    """Each user served by the single RRU with the largest channel norm."""
    norms = np.linalg.norm(H, axis=2)  # (B, K)
    return tuple((int(np.argmax(norms[:, k])),) for k in range(H.shape[1]))


def design_layout(kind: str, drop: Drop, cfg: SystemConfig):
    """Serving sets and subset floor a design is planned and rated with."""
    sets = drop.topology.serving_sets
    if kind in SOLVERS:
        return sets, cfg.subset_floor
    if kind in ("mrt", "full_jt"):
        return sets, max(len(s) for s in sets)
    if kind == "cb":
        return strongest_rru_sets(drop.channels.estimation), 1
    raise ValueError(f"unknown design {kind!r}")


def _layout_kind(solver: str) -> str:
    return solver if solver in BASELINES else "kkt"


def mrt_beams(prob: Problem) -> np.ndarray:
    """Matched filters, each RRU splitting its power equally over served users."""
    return kkt.init_beams(prob, "mrt")


def _design(kind: str, prob: Problem, cfg: SystemConfig):
    """Beams (D, B, K, Nt) and the solver result of each drop (None for MRT)."""
    if kind == "mrt":
        return mrt_beams(prob), [None] * prob.num_drops
    if kind == "sca":
        results = sca.sca_solve_problem(prob, cfg)
    else:
        results = kkt.solve_problem(prob, cfg)
    return np.stack([r.beams.f for r in results]), results


def baseline_beamformers(kind: str, channels: ChannelSet, topo: Topology,
                         cfg: SystemConfig) -> BeamformerSet:
    """Reference designs: matched filter, conventional full JT, or single-RRU CB."""
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}")
    drop = Drop(topo, channels)
    sets, floor = design_layout(kind, drop, cfg)
    prob = Problem.single(channels.estimation, sets, cfg, floor)
    F, _ = _design(kind, prob, cfg)
    return BeamformerSet(F[0], prob.serving[0])


def design_beams(kind: str, drops: Sequence[Drop], cfg: SystemConfig):
    """(problem, beams, solver result) for every drop and a failure flag per drop.

    Drops are solved as one batch; if the batch fails, each drop is retried
    alone so one bad instance cannot sink the rest.
    """
    layouts = [design_layout(kind, d, cfg) for d in drops]
    floor = layouts[0][1]
    groups: dict = {}
    for i, (sets, _) in enumerate(layouts):
        groups.setdefault(tuple(len(s) for s in sets), []).append(i)
    out: list = [None] * len(drops)
    failed = np.zeros(len(drops), dtype=bool)
    for members in groups.values():
        prob = Problem.build([drops[i].channels.estimation for i in members],
                             [layouts[i][0] for i in members], cfg, floor)
        try:
            F, results = _design(kind, prob, cfg)
            for j, i in enumerate(members):
                out[i] = (prob.take(np.array([j])), F[j], results[j])
        except SOLVER_ERRORS:
            for j, i in enumerate(members):
                one = prob.take(np.array([j]))
                try:
                    F, results = _design(kind, one, cfg)
                    out[i] = (one, F[0], results[0])
                except SOLVER_ERRORS:
                    out[i] = (one, None, None)
                    failed[i] = True
    return out, failed


def assigned_and_supported(prob: Problem, F: np.ndarray, H_tx: np.ndarray, cfg: SystemConfig):
    """Assigned rates log2(1 + pessimistic SINR) on the design snapshot and the
    rates the transmission snapshot supports with the whole serving set."""
    _, s = prob.products(F[None])
    gamma = prob.user_min(prob.row_sinr(s))[0]
    Ht = H_tx / np.sqrt(cfg.noise_power)
    P = Ht.conj() @ np.swapaxes(F, -1, -2)  # (B, K, K)
    amp = P.sum(axis=0)
    power = np.abs(amp) ** 2
    signal = np.diag(power)
    actual = signal / (1.0 + power.sum(axis=1) - signal)
    return np.log2(1.0 + gamma), np.log2(1.0 + actual)


@dataclass
class ReliabilityReport:
    eta: float
    floor: int
    solver: str
    drops: int
    success_theory: np.ndarray  # (K,) mean over drops of p_k
    outage_theory: float  # mean over drops of 1 - prod p_k
    success_bound: np.ndarray  # (K,) mean over drops of the area-averaged bound
    outage_bound: float
    outage: float  # Monte Carlo event frequency over solved drops
    outage_ci: float  # 95% normal-approximation half-width
    sum_rate: float  # mean assigned sum rate, bits/s/Hz
    effective_rate: float  # (1 - outage) * sum_rate
    failures: int = 0
    per_drop_outage: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    per_drop_sum_rate: np.ndarray = field(default_factory=lambda: np.empty(0))
    hygiene: list = field(default_factory=list)  # per solved drop, solver invariant extremes

    def csv_row(self) -> list:
        return [repr(float(self.eta)), self.floor, self.solver, self.drops,
                repr(float(self.outage)), repr(float(self.outage_ci)),
                repr(float(self.sum_rate)), repr(float(self.effective_rate)),
                repr(float(self.outage_theory)), repr(float(self.outage_bound))]


def reports_csv(reports: Sequence[ReliabilityReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def monte_carlo_outage(cfg: SystemConfig, drops: int, solver: str = "kkt",
                       seed: Optional[int] = None, drop_list: Optional[Sequence[Drop]] = None,
                       beams_fn=None) -> ReliabilityReport:
    """Outage and effective sum rate of a design over random drops.

    A drop is in outage when any user's assigned rate exceeds what its
    transmission-time channel supports. Drops whose solver fails are counted
    in ``failures`` and left out of the rates. ``beams_fn(drops, cfg)`` may
    replace the built-in designs; it returns the same triples as
    `design_beams`.
    """
    if drops < 1:
        raise ValueError("drops must be >= 1")
    seed = cfg.rng_seed if seed is None else seed
    if drop_list is None:
        drop_list = [draw_drop(cfg, seed, i) for i in range(drops)]
    drop_list = list(drop_list)[:drops]
    if beams_fn is not None:
        designed, failed = beams_fn(drop_list, cfg)
    else:
        designed, failed = design_beams(solver, drop_list, cfg)
    K = cfg.num_users
    outage = np.zeros(drops, dtype=bool)
    sum_rate = np.zeros(drops)
    p_theory = np.zeros((drops, K))
    p_bound = np.zeros((drops, K))
    hygiene: list = []
    for i, drop in enumerate(drop_list):
        topo = drop.topology
        layout_sets, floor = design_layout(_layout_kind(solver), drop, cfg)
        view = Topology(topo.rru_positions, topo.user_positions, layout_sets)
        for k in range(K):
            p_theory[i, k] = success_probability(k, view, cfg, floor)
            p_bound[i, k] = success_upper_bound(k, view, cfg, floor)
        if failed[i]:
            continue
        prob, F, res = designed[i]
        if res is not None:
            hygiene.append(res.hygiene)
        assigned, supported = assigned_and_supported(prob, F, drop.channels.transmission, cfg)
        outage[i] = bool(np.any(assigned > supported + RATE_TOL))
        sum_rate[i] = float(assigned.sum())
    ok = ~failed
    n = int(ok.sum())
    p_out = float(outage[ok].mean()) if n else float("nan")
    ci = float(1.96 * np.sqrt(p_out * (1.0 - p_out) / n)) if n else float("nan")
    rate = float(sum_rate[ok].mean()) if n else float("nan")
    _, floor0 = design_layout(_layout_kind(solver), drop_list[0], cfg)
    return ReliabilityReport(
        eta=float(cfg.blockage_density), floor=int(floor0), solver=solver, drops=drops,
        success_theory=p_theory.mean(axis=0),
        outage_theory=float(np.mean(1.0 - np.prod(p_theory, axis=1))),
        success_bound=p_bound.mean(axis=0),
        outage_bound=float(np.mean(1.0 - np.prod(p_bound, axis=1))),
        outage=p_out, outage_ci=ci, sum_rate=rate, effective_rate=(1.0 - p_out) * rate,
        failures=int(failed.sum()), per_drop_outage=outage, per_drop_sum_rate=sum_rate,
        hygiene=hygiene)
