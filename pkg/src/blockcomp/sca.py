"""Successive convex approximation over the subset-SINR reformulation.

Each outer iteration freezes an approximation point (beams, SINR targets),
solves the convex subproblem in which every quadratic-over-linear term is
replaced by its first-order expansion, and moves the point to the solution.
The subproblem solver is pluggable; the default runs the closed-form KKT
iteration with the point held fixed. All drops of a batch advance together
but accept, converge and stop independently.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from . import kkt
from .config import SystemConfig
from .kkt import DualState, Hygiene, Problem, SolverResult
from .metrics import BeamformerSet

INNER_MAX_ITERS = 5000
INNER_TOL = 1e-6


class BackendError(RuntimeError):
    pass


@dataclass
class ScaPoint:
    beams: np.ndarray  # (D, B, K, Nt), power-feasible
    gammas: np.ndarray  # (D, K), at most the pessimistic SINR of `beams`


@dataclass
class SubproblemSolution:
    beams: np.ndarray  # (D, B, K, Nt)
    gammas: np.ndarray  # (D, K)
    iterations: np.ndarray  # (D,) inner iterations used
    converged: np.ndarray  # (D,) bool
    objective_traces: list = field(default_factory=list)  # per drop, achieved objective per inner step
    violation_traces: list = field(default_factory=list)
    power_traces: list = field(default_factory=list)  # per drop, (steps, B)
    duals: Optional[DualState] = None
    hygiene: list = field(default_factory=list)  # per drop Hygiene


class SubproblemBackend(Protocol):
    def __call__(self, point: ScaPoint, prob: Problem, cfg: SystemConfig,
                 warm: Optional[DualState] = None) -> SubproblemSolution:
        ...


def _linear_part(s, s_pt, g0):
    return 2.0 * np.sum(np.real(np.conj(s_pt) * (s - s_pt)), axis=-1) / (1.0 + g0)


def surrogate_sinr_bound(prob: Problem, s: np.ndarray, s_pt: np.ndarray,
                         gamma_pt: np.ndarray) -> np.ndarray:
    """Largest target each row allows under the linearized constraint, (D, R).

    The linearized constraint is affine-decreasing in the target, so it holds
    iff target <= this bound. The bound is concave in the beams and equals the
    row SINR at the expansion point when the point's target is tight.
    """
    g0 = gamma_pt[:, prob.user]
    signal, total = prob.row_terms(s)
    _, t0 = prob.row_terms(s_pt)
    interference = total - signal
    lin = _linear_part(s, s_pt, g0)
    return g0 + (1.0 + g0) * (1.0 - (1.0 + g0) * (interference - lin) / t0)


def surrogate_residuals(prob: Problem, beams: np.ndarray, gammas: np.ndarray,
                        point: ScaPoint) -> np.ndarray:
    """I_r(beams) - F_r(beams, gammas; point) per row in noise units, (D, R).

    Nonpositive entries mean the linearized constraint holds.
    """
    _, s = prob.products(beams)
    _, s0 = prob.products(point.beams)
    g = gammas[:, prob.user]
    g0 = point.gammas[:, prob.user]
    _, t0 = prob.row_terms(s0)
    surrogate = _linear_part(s, s0, g0) + t0 / (1.0 + g0) * (1.0 - (g - g0) / (1.0 + g0))
    signal, total = prob.row_terms(s)
    return total - signal - surrogate


class KktBackend:
    """Closed-form KKT iteration on the subproblem at a fixed point.

    The subset duals are updated with the residual in SINR units, target
    minus `surrogate_sinr_bound`, which matches the scale of the
    target-minus-SINR residual of the refreshed-point solver. Each drop stops
    when the mean certified objective of the last window moved less than
    ``tol`` (relative) against the window before.
    """

    def __init__(self, max_iters: int = INNER_MAX_ITERS, tol: float = INNER_TOL,
                 window: int = kkt.WINDOW):
        self.max_iters = max_iters
        self.tol = tol
        self.window = window

    def __call__(self, point: ScaPoint, prob: Problem, cfg: SystemConfig,
                 warm: Optional[DualState] = None) -> SubproblemSolution:
        psi, beta, btol = cfg.best_response_step, cfg.subgrad_step, cfg.bisection_tol
        D, W = prob.num_drops, self.window
        pt_all = prob.products(point.beams)
        _, total_all = prob.row_terms(pt_all[1])
        if warm is None:
            a = kkt.initial_duals(prob, total_all, point.gammas)
            z = np.zeros(prob.power.shape)
        else:
            a, z = warm.a.copy(), warm.z.copy()
        out_F = point.beams.copy()
        out_g = np.maximum(point.gammas, 0.0)
        out_a, out_z = a.copy(), z.copy()
        certified = np.full((self.max_iters + 1, D), np.nan)
        achieved_tr = np.full((self.max_iters + 1, D), np.nan)
        viol_tr = np.full((self.max_iters + 1, D), np.nan)
        power_tr = np.full((self.max_iters + 1, D, prob.power.shape[1]), np.nan)
        iters = np.zeros(D, dtype=int)
        conv = np.zeros(D, dtype=bool)
        ext = np.zeros((4, D))  # max power ratio, min a, min z, min gamma
        ext[1:] = np.inf

        idx = np.arange(D)
        sub = prob
        F = point.beams.copy()
        g_pt, pt, total_pt = point.gammas, pt_all, total_all
        cap = sub.gamma_cap()
        prods = pt
        for it in range(1, self.max_iters + 1):
            F_star, z = kkt.best_beams(sub, a, prods, pt, g_pt, btol)
            F = kkt.best_response_step(F, F_star, psi)
            gam = kkt.gamma_update(sub, a, total_pt, g_pt, cap)
            prods = sub.products(F)
            bound = surrogate_sinr_bound(sub, prods[1], pt[1], g_pt)
            viol = gam[:, sub.user] - bound
            a = kkt.dual_subgradient_update(a, beta, viol)
            a = kkt.keep_dual_positive(sub, a, bound, total_pt, gam, cap)
            feasible = np.maximum(sub.user_min(bound), 0.0)
            achieved = sub.user_min(sub.row_sinr(prods[1]))
            power = np.sum(np.abs(F) ** 2, axis=(2, 3))
            certified[it, idx] = sub.objective(feasible)
            achieved_tr[it, idx] = sub.objective(achieved)
            viol_tr[it, idx] = np.max(np.maximum(viol, 0.0), axis=1)
            power_tr[it, idx] = power
            iters[idx] = it
            ext[0, idx] = np.maximum(ext[0, idx], np.max(power / sub.power, axis=1))
            ext[1, idx] = np.minimum(ext[1, idx], a.min(axis=1))
            ext[2, idx] = np.minimum(ext[2, idx], z.min(axis=1))
            ext[3, idx] = np.minimum(ext[3, idx], gam.min(axis=1))
            out_F[idx], out_g[idx], out_a[idx], out_z[idx] = F, feasible, a, z
            if it < 2 * W:
                continue
            new = certified[it - W + 1:it + 1, idx].mean(axis=0)
            old = certified[it - 2 * W + 1:it - W + 1, idx].mean(axis=0)
            stop = np.abs(new - old) <= self.tol * np.maximum(np.abs(new), 1e-12)
            if not np.any(stop):
                continue
            conv[idx[stop]] = True
            keep = ~stop
            if not np.any(keep):
                break
            idx = idx[keep]
            sub = prob.take(idx)
            F, a, z, cap, g_pt = F[keep], a[keep], z[keep], cap[keep], g_pt[keep]
            pt = (pt[0][keep], pt[1][keep])
            total_pt = total_pt[keep]
            prods = (prods[0][keep], prods[1][keep])

        out_F, out_g = restore_nonnegative(prob, point, out_F)
        return SubproblemSolution(
            beams=out_F, gammas=out_g, iterations=iters, converged=conv,
            objective_traces=[achieved_tr[1:iters[d] + 1, d] for d in range(D)],
            violation_traces=[viol_tr[1:iters[d] + 1, d] for d in range(D)],
            power_traces=[power_tr[1:iters[d] + 1, d] for d in range(D)],
            duals=DualState(out_a, out_z),
            hygiene=[Hygiene(*map(float, ext[:, d])) for d in range(D)])


def restore_nonnegative(prob: Problem, point: ScaPoint, beams: np.ndarray,
                        steps: int = 50):
    """Pull beams toward the point until every user's surrogate bound is >= 0.

    Targets are kept nonnegative, so a user whose bound went negative would
    violate its linearized constraint. The bound is nonnegative at the point
    and the feasible set is convex, so the segment from the point keeps power
    feasibility and some prefix of it is surrogate-feasible; the largest such
    step is found by bisection. Returns the beams and their certified targets.
    """
    _, s_pt = prob.products(point.beams)

    def lowest(F):
        _, s = prob.products(F)
        return prob.user_min(surrogate_sinr_bound(prob, s, s_pt, point.gammas))

    low = lowest(beams)
    bad = np.min(low, axis=1) < 0
    if np.any(bad):
        lo = np.zeros(prob.num_drops)
        hi = np.ones(prob.num_drops)
        delta = beams - point.beams
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            ok = np.min(lowest(point.beams + mid[:, None, None, None] * delta), axis=1) >= 0
            lo = np.where(bad & ok, mid, lo)
            hi = np.where(bad & ~ok, mid, hi)
        theta = np.where(bad, lo, 1.0)
        beams = point.beams + theta[:, None, None, None] * delta
        low = lowest(beams)
    return beams, np.maximum(low, 0.0)


def identity_backend(point: ScaPoint, prob: Problem, cfg: SystemConfig,
                     warm: Optional[DualState] = None) -> SubproblemSolution:
    """Returns the point itself; a fixed-point check of the outer loop."""
    D = prob.num_drops
    return SubproblemSolution(point.beams.copy(), point.gammas.copy(),
                              np.zeros(D, dtype=int), np.ones(D, dtype=bool))


def default_backend(point: ScaPoint, prob: Problem, cfg: SystemConfig,
                    warm: Optional[DualState] = None) -> SubproblemSolution:
    """Subproblem solve by the fixed-point KKT iteration."""
    return KktBackend()(point, prob, cfg, warm)


def _achieved(prob: Problem, F: np.ndarray):
    _, s = prob.products(F)
    g = prob.user_min(prob.row_sinr(s))
    return g, prob.objective(g)


def sca_solve_problem(prob: Problem, cfg: SystemConfig,
                      backend: Optional[SubproblemBackend] = None, init: str = "mrt",
                      rngs=None) -> list[SolverResult]:
    """Outer SCA loop with a monotone safeguard, one result per drop.

    After each subproblem the targets are reset to the pessimistic SINRs of
    the new beams (capped), which keeps the next point feasible and tangent.
    A new point is accepted only if the achieved objective does not
    decrease; otherwise that drop stops at its current point.
    """
    backend = backend if backend is not None else default_backend
    D = prob.num_drops
    state0 = kkt.init_feasible(prob, init, rngs)
    cap = prob.gamma_cap()
    gam, obj = _achieved(prob, state0.beams)
    F_pt = state0.beams.copy()
    g_pt = np.minimum(gam, cap)
    duals = DualState(state0.duals.a.copy(), state0.duals.z.copy())
    warm: Optional[DualState] = None

    outer_obj = [[float(o)] for o in obj]
    traces = [[np.array([o])] for o in obj]
    viols = [[np.zeros(1)] for _ in range(D)]
    powers = [[np.sum(np.abs(F_pt[d]) ** 2, axis=(1, 2))[None]] for d in range(D)]
    outer_idx = [[np.zeros(1, dtype=int)] for _ in range(D)]
    hyg = [Hygiene() for _ in range(D)]
    for d in range(D):
        hyg[d].update(powers[d][0][0] / prob.power[d], state0.duals.a[d], state0.duals.z[d], g_pt[d])
    iterations = np.zeros(D, dtype=int)
    converged = np.zeros(D, dtype=bool)
    worst_residual = np.zeros(D)

    idx = np.arange(D)
    for it in range(1, cfg.sca_max_iters + 1):
        sub = prob.take(idx)
        point = ScaPoint(F_pt[idx], g_pt[idx])
        w = None if warm is None else DualState(warm.a[idx], warm.z[idx])
        try:
            sol = backend(point, sub, cfg, w)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise BackendError(f"subproblem backend failed at outer iteration {it}: {exc}") from exc
        if sol.duals is not None:
            if warm is None:
                warm = DualState(np.zeros_like(duals.a), np.zeros_like(duals.z))
            warm.a[idx], warm.z[idx] = sol.duals.a, sol.duals.z
        resid = surrogate_residuals(sub, sol.beams, sol.gammas, point)
        scale = np.maximum(np.abs(sub.row_terms(sub.products(sol.beams)[1])[1]), 1.0)
        new_gam, new_obj = _achieved(sub, sol.beams)
        keep = np.ones(len(idx), dtype=bool)
        for j, d in enumerate(idx):
            iterations[d] += max(int(sol.iterations[j]), 1)
            if sol.objective_traces:
                n = len(sol.objective_traces[j])
                traces[d].append(sol.objective_traces[j])
                viols[d].append(sol.violation_traces[j])
                powers[d].append(sol.power_traces[j])
                outer_idx[d].append(np.full(n, it))
                hyg[d].merge(sol.hygiene[j])
            if new_obj[j] < outer_obj[d][-1]:
                converged[d] = True
                keep[j] = False
                continue
            worst_residual[d] = max(worst_residual[d], float(np.max(resid[j] / scale[j])))
            gain = new_obj[j] - outer_obj[d][-1]
            outer_obj[d].append(float(new_obj[j]))
            F_pt[d] = sol.beams[j]
            g_pt[d] = np.minimum(new_gam[j], cap[d])
            if sol.duals is not None:
                duals.a[d], duals.z[d] = sol.duals.a[j], sol.duals.z[j]
            if gain <= cfg.convergence_tol * max(abs(new_obj[j]), 1e-12):
                converged[d] = True
                keep[j] = False
        idx = idx[keep]
        if len(idx) == 0:
            break

    results = []
    for d in range(D):
        one = prob.take(np.array([d]))
        g_final, obj_final = _achieved(one, F_pt[d][None])
        res = SolverResult(
            beams=BeamformerSet(F_pt[d], prob.serving[d]),
            gammas=g_final[0],
            gamma_iterate=g_pt[d].copy(),
            duals=DualState(duals.a[d].copy(), duals.z[d].copy()),
            objective_trace=np.concatenate(traces[d]),
            violation_trace=np.concatenate(viols[d]),
            power_trace=np.concatenate(powers[d]),
            converged=bool(converged[d]),
            iterations=int(iterations[d]),
            family=prob.families[d],
            objective=float(obj_final[0]),
            best_iteration=int(iterations[d]),
            hygiene=hyg[d],
            outer_index=np.concatenate(outer_idx[d]),
            outer_objectives=np.asarray(outer_obj[d]),
            surrogate_residual=float(worst_residual[d]),
        )
        results.append(res)
    return results


def sca_solve(H: np.ndarray, serving_sets, cfg: SystemConfig,
              backend: Optional[SubproblemBackend] = None, init: str = "mrt",
              rng: Optional[np.random.Generator] = None, floor: Optional[int] = None) -> SolverResult:
    """SCA beamformers for one channel ``H`` (B, K, Nt)."""
    prob = Problem.single(H, serving_sets, cfg, floor)
    if init == "random" and rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    return sca_solve_problem(prob, cfg, backend, init, None if rng is None else [rng])[0]


def sca_solve_batch(channels: Sequence[np.ndarray], serving_sets: Sequence, cfg: SystemConfig,
                    backend: Optional[SubproblemBackend] = None, init: str = "mrt",
                    rngs=None, floor: Optional[int] = None) -> list[SolverResult]:
    prob = Problem.build(channels, serving_sets, cfg, floor)
    return sca_solve_problem(prob, cfg, backend, init, rngs)
