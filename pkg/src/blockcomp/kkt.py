"""Low-complexity KKT iteration for blockage-aware weighted sum-rate maximization.

Each iteration computes closed-form per-RRU beamformers (power dual found by
bisection), takes a damped best-response step, updates the pessimistic SINR
targets from the stationarity condition and moves the subset duals along the
SINR-violation subgradient. The convex-approximation point is refreshed every
iteration.

All kernels carry a leading drop axis D so independent instances share one
pass of numpy calls; a single instance is a batch of one. Channels are
divided by the noise amplitude so the noise power is one; SINRs and
beamformers are unaffected, duals are reported in these normalized units.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .config import SystemConfig
from .metrics import BeamformerSet, weighted_sum_rate
from .subsets import SubsetFamily

RIDGE = 1e-12
MAX_BISECTION_STEPS = 200
WINDOW = 50


class BisectionError(RuntimeError):
    def __init__(self, msg: str, bracket: tuple[float, float]):
        super().__init__(f"{msg} (bracket {bracket})")
        self.bracket = bracket


class DualContractError(RuntimeError):
    """All subset duals of a positively weighted user vanished."""


# ----------------------------------------------------------------------------
# batched problem data


@dataclass
class Problem:
    """Noise-normalized batch of instances sharing user count and row layout."""

    H: np.ndarray  # (D, B, K, Nt) channel / noise amplitude
    serving: np.ndarray  # (D, B, K) bool
    user: np.ndarray  # (R,) owner of each constraint row, nondecreasing
    mask: np.ndarray  # (D, R, B) RRUs kept by each row
    weights: np.ndarray  # (K,)
    power: np.ndarray  # (D, B) watts
    families: tuple  # per-drop SubsetFamily

    @classmethod
    def build(cls, channels: Sequence[np.ndarray], serving_sets: Sequence, cfg: SystemConfig,
              floor: Optional[int] = None) -> "Problem":
        """Batch from per-drop channels (B, K, Nt) and serving sets."""
        L = cfg.subset_floor if floor is None else floor
        H = np.stack([np.asarray(h, dtype=complex) for h in channels]) / np.sqrt(cfg.noise_power)
        D, B, K, _ = H.shape
        serving = np.zeros((D, B, K), dtype=bool)
        fams = []
        for d, sets in enumerate(serving_sets):
            for k, s in enumerate(sets):
                serving[d, list(s), k] = True
            fams.append(SubsetFamily.build(sets, [min(L, len(s)) for s in sets], B))
        user = fams[0].user
        if any(len(f.user) != len(user) or np.any(f.user != user) for f in fams):
            raise ValueError("all drops in a batch need the same serving-set sizes")
        mask = np.stack([f.mask for f in fams])
        power = np.full((D, B), cfg.tx_power)
        return cls(H, serving, user, mask, np.asarray(cfg.weights, dtype=float), power, tuple(fams))

    @classmethod
    def single(cls, H: np.ndarray, serving_sets, cfg: SystemConfig,
               floor: Optional[int] = None) -> "Problem":
        return cls.build([H], [serving_sets], cfg, floor)

    @cached_property
    def gram(self) -> np.ndarray:
        """(D, B, K, K) inner products h_{b,u}^H h_{b,v}."""
        return self.H.conj() @ np.swapaxes(self.H, -1, -2)

    def take(self, idx: np.ndarray) -> "Problem":
        return Problem(self.H[idx], self.serving[idx], self.user, self.mask[idx], self.weights,
                       self.power[idx], tuple(self.families[i] for i in idx))

    @property
    def num_drops(self) -> int:
        return self.H.shape[0]

    @property
    def num_users(self) -> int:
        return self.H.shape[2]

    @property
    def num_rows(self) -> int:
        return len(self.user)

    @property
    def onehot(self) -> np.ndarray:
        return np.eye(self.num_users)[self.user]

    @property
    def offsets(self) -> np.ndarray:
        """First row of each user; rows are grouped by user."""
        return np.searchsorted(self.user, np.arange(self.num_users))

    def counts(self) -> np.ndarray:
        return np.bincount(self.user, minlength=self.num_users)

    def user_min(self, x: np.ndarray) -> np.ndarray:
        return np.minimum.reduceat(x, self.offsets, axis=-1)

    def user_sum(self, x: np.ndarray) -> np.ndarray:
        return np.add.reduceat(x, self.offsets, axis=-1)

    def gamma_cap(self) -> np.ndarray:
        """(D, K) single-user full-power SNR, an upper bound on any achievable SINR."""
        norms = np.linalg.norm(self.H, axis=3) * self.serving
        return np.einsum("db,dbk->dk", np.sqrt(self.power), norms) ** 2

    def user_rows(self) -> list[slice]:
        ends = list(self.offsets[1:]) + [self.num_rows]
        return [slice(int(b), int(e)) for b, e in zip(self.offsets, ends)]

    def products(self, F: np.ndarray):
        """P[d, b, k, j] = h_{b,k}^H f_{b,j} and row products s[d, r, j]."""
        P = self.H.conj() @ np.swapaxes(F, -1, -2)
        s = np.empty((P.shape[0], self.num_rows, P.shape[3]), dtype=complex)
        for u, rows in enumerate(self.user_rows()):
            s[:, rows] = self.mask[:, rows] @ P[:, :, u, :]
        return P, s

    def row_terms(self, s: np.ndarray):
        power = np.abs(s) ** 2
        signal = power[:, np.arange(self.num_rows), self.user]
        total = 1.0 + power.sum(axis=2)
        return signal, total

    def row_sinr(self, s: np.ndarray) -> np.ndarray:
        signal, total = self.row_terms(s)
        return signal / (total - signal)

    def objective(self, achieved: np.ndarray) -> np.ndarray:
        return np.log1p(achieved) @ self.weights


# ----------------------------------------------------------------------------
# state and results


@dataclass
class DualState:
    a: np.ndarray  # (..., R) subset-constraint multipliers
    z: np.ndarray  # (..., B) power multipliers


@dataclass
class SolverState:
    beams: np.ndarray  # (D, B, K, Nt)
    gammas: np.ndarray  # (D, K) SINR targets of the iteration
    duals: DualState
    iteration: int = 0


@dataclass
class Hygiene:
    """Extremes of the per-iteration invariants over a run."""

    max_power_ratio: float = 0.0  # max over iterations and RRUs of power / budget
    min_dual_a: float = np.inf
    min_dual_z: float = np.inf
    min_gamma: float = np.inf

    def update(self, power_ratio, a, z, gammas) -> None:
        self.max_power_ratio = max(self.max_power_ratio, float(np.max(power_ratio)))
        self.min_dual_a = min(self.min_dual_a, float(np.min(a)))
        self.min_dual_z = min(self.min_dual_z, float(np.min(z)))
        self.min_gamma = min(self.min_gamma, float(np.min(gammas)))

    def merge(self, other: "Hygiene") -> None:
        self.max_power_ratio = max(self.max_power_ratio, other.max_power_ratio)
        self.min_dual_a = min(self.min_dual_a, other.min_dual_a)
        self.min_dual_z = min(self.min_dual_z, other.min_dual_z)
        self.min_gamma = min(self.min_gamma, other.min_gamma)

    def ok(self, slack: float = 1e-6) -> bool:
        return (self.max_power_ratio <= 1.0 + slack and self.min_dual_a >= 0
                and self.min_dual_z >= 0 and self.min_gamma >= 0)


@dataclass
class SolverResult:
    beams: BeamformerSet
    gammas: np.ndarray  # pessimistic SINR achieved by the returned beams
    gamma_iterate: np.ndarray  # SINR targets held by the solver with those beams
    duals: DualState
    objective_trace: np.ndarray  # weighted sum-rate (nats) of achieved SINRs per iteration
    violation_trace: np.ndarray  # max positive target-minus-SINR gap per iteration
    power_trace: np.ndarray  # (iters, B) per-RRU transmit power, empty if not recorded
    converged: bool
    iterations: int
    family: SubsetFamily
    objective: float = 0.0
    best_iteration: int = 0
    hygiene: Hygiene = field(default_factory=Hygiene)
    outer_index: Optional[np.ndarray] = None  # SCA outer iteration of each trace row
    outer_objectives: Optional[np.ndarray] = None  # accepted SCA points only
    surrogate_residual: Optional[float] = None  # worst relative surrogate violation (SCA)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        B = self.power_trace.shape[1] if self.power_trace.ndim == 2 else 0
        head = ["iteration", "objective", "max_violation"] + [f"power_{b}" for b in range(B)]
        if self.outer_index is not None:
            head.insert(1, "outer_iteration")
        w.writerow(head)
        for i, (obj, vio) in enumerate(zip(self.objective_trace, self.violation_trace)):
            row = [i, repr(float(obj)), repr(float(vio))]
            if B:
                row += [repr(float(p)) for p in self.power_trace[i]]
            if self.outer_index is not None:
                row.insert(1, int(self.outer_index[i]))
            w.writerow(row)
        return buf.getvalue()


# ----------------------------------------------------------------------------
# initialization


def init_beams(prob: Problem, strategy: str = "mrt", rngs=None) -> np.ndarray:
    """MRT or random beams, each RRU splitting its power equally over its users."""
    D, B, K, nt = prob.H.shape
    if strategy == "mrt":
        d = prob.H.copy()
    elif strategy == "random":
        if rngs is None:
            rngs = [np.random.default_rng(i) for i in range(D)]
        elif isinstance(rngs, np.random.Generator):
            rngs = [rngs]
        d = np.stack([g.standard_normal((B, K, nt)) + 1j * g.standard_normal((B, K, nt))
                      for g in rngs])
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    norms = np.linalg.norm(d, axis=3, keepdims=True)
    d = np.divide(d, norms, out=np.zeros_like(d), where=norms > 0)
    n_served = np.maximum(prob.serving.sum(axis=2), 1)
    per_link = np.sqrt(prob.power / n_served)[..., None, None]
    return d * per_link * prob.serving[..., None]


def initial_duals(prob: Problem, total: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """Duals for which the first target update returns ``gammas`` unchanged."""
    w = np.where(prob.weights > 0, prob.weights, 1.0)
    counts = prob.counts()
    return (w * (1.0 + gammas))[:, prob.user] / (counts[prob.user] * total)


def init_feasible(prob: Problem, strategy: str = "mrt", rngs=None) -> SolverState:
    """Feasible starting point: scaled beams, their pessimistic SINRs, and
    strictly positive subset duals that make the target update a fixed point."""
    F = init_beams(prob, strategy, rngs)
    _, s = prob.products(F)
    gammas = np.minimum(prob.user_min(prob.row_sinr(s)), prob.gamma_cap())
    _, total = prob.row_terms(s)
    a = initial_duals(prob, total, gammas)
    return SolverState(F, gammas, DualState(a, np.zeros(prob.power.shape)))


# ----------------------------------------------------------------------------
# closed-form pieces


def multipliers_and_rhs(prob: Problem, a: np.ndarray, it_products, pt_products,
                        gamma_pt: np.ndarray):
    """alpha[d, b, u] (subset duals seen by RRU b for user u) and t[d, b, k].

    ``it_products`` are the products of the frozen iterate, ``pt_products``
    those of the approximation point. With G the row masks,
    t[b, k] = sum_u h_{b,u} c[b, u, k] and
    c[b, u, k] = sum_{r of u} a_r G_rb (s_pt[r, k] / (1 + gamma_pt_u)
                 - [u != k] (s_it[r, k] - P_it[b, u, k])),
    the last bracket being row r's received amplitude from every kept RRU but b.
    """
    P_it, s_it = it_products
    _, s_pt = pt_products
    aG = a[:, :, None] * prob.mask  # (D, R, B)
    D, B, K = P_it.shape[0], P_it.shape[1], prob.num_users
    alpha = np.empty((D, B, K))
    lin = np.empty((D, B, K, K), dtype=complex)
    frz = np.empty((D, B, K, K), dtype=complex)
    for u, rows in enumerate(prob.user_rows()):
        aGt = np.swapaxes(aG[:, rows], 1, 2)  # (D, B, R_u)
        alpha[:, :, u] = aGt.sum(axis=2)
        lin[:, :, u] = (aGt @ s_pt[:, rows]) / (1.0 + gamma_pt[:, u])[:, None, None]
        frz[:, :, u] = aGt @ s_it[:, rows]
    others = 1.0 - np.eye(K)
    coef = lin - others * (frz - P_it * alpha[..., None])  # [d, b, u, k]
    t = np.swapaxes(coef, -1, -2) @ prob.H
    return alpha, t


def system_terms(prob: Problem, a: np.ndarray, F_it: np.ndarray, F_pt: np.ndarray,
                 gamma_pt: np.ndarray):
    """Dense interference matrices A[d, b, k] and right-hand sides t[d, b, k].

    (z_b I + A) f_{b,k} = t is the stationarity condition for f_{b,k}, with
    other RRUs' contributions frozen at ``F_it`` and the linearization taken
    at (``F_pt``, ``gamma_pt``).
    """
    alpha, t = multipliers_and_rhs(prob, a, prob.products(F_it), prob.products(F_pt), gamma_pt)
    H = prob.H
    outer = np.einsum("dbun,dbum->dbunm", H, H.conj())
    Q = np.einsum("dbu,dbunm->dbnm", alpha, outer)
    A = Q[:, :, None] - alpha[..., None, None] * outer
    return A, t


def beamformer_star(A_bk: np.ndarray, t_bk: np.ndarray, z_b: float) -> np.ndarray:
    """Solve (z_b I + A_bk) f = t_bk; a tiny ridge keeps z_b = 0 solvable."""
    n = A_bk.shape[0]
    ridge = RIDGE if z_b == 0 else 0.0
    return np.linalg.solve(A_bk + (z_b + ridge) * np.eye(n), t_bk)


def spectral_dense(A: np.ndarray, t: np.ndarray):
    """Eigenvalues of A and squared projections of t, the inputs of the power curve."""
    lam, V = np.linalg.eigh(A)
    lam = np.maximum(lam, 0.0)
    w2 = np.abs(np.einsum("...nm,...n->...m", V.conj(), t)) ** 2
    return lam, V, w2


@dataclass
class LowRankSystem:
    """A = X X^H with X = [sqrt(alpha_u) h_u]_{u != k}, kept in K-dim form.

    One entry per served (RRU, user) pair. The power curve of the closed-form
    beams needs only the nonzero eigenvalues of X^H X, the projections of t
    onto the range of A, and the energy of t outside it (an eigenvalue-zero
    term).
    """

    lam: np.ndarray  # (N, K+1) eigenvalues; last slot is 0 for the orthogonal part
    w2: np.ndarray  # (N, K+1) matching squared projections
    V: np.ndarray  # (N, K, K) eigenvectors of the Gram matrices
    y: np.ndarray  # (N, K) X^H t
    root: np.ndarray  # (N, K) sqrt(alpha) with the own user zeroed
    t_perp: np.ndarray  # (N, Nt)
    keep: np.ndarray  # (N, K) eigenvalues treated as nonzero

    def beams(self, H: np.ndarray, z: np.ndarray) -> np.ndarray:
        """(z I + A)^+ t for per-pair channels H (N, K, Nt) and multipliers z (N,)."""
        lam = self.lam[:, :-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(self.keep, 1.0 / (lam * (lam + z[:, None])), 0.0)
        proj = _matvec(np.swapaxes(self.V.conj(), -1, -2), self.y)
        coeff = _matvec(self.V, inv * proj) * self.root
        par = _matvec(np.swapaxes(H, -1, -2), coeff)
        zr = np.where(z > 0, z, RIDGE)[:, None]
        return par + self.t_perp / zr


def _matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (M @ v[..., None])[..., 0]


def lowrank_system(H: np.ndarray, gram: np.ndarray, root: np.ndarray,
                   t: np.ndarray) -> LowRankSystem:
    """Spectral data of A = sum_u root_u^2 h_u h_u^H for N pairs.

    ``H`` is (N, K, Nt), ``gram`` its (N, K, K) matrix of h_u^H h_v, ``root``
    (N, K) and ``t`` (N, Nt).
    """
    G = root[:, :, None] * gram * root[:, None, :]
    lam, V = np.linalg.eigh(G)
    top = lam.max(axis=-1, keepdims=True)
    keep = lam > 1e-12 * np.maximum(top, 1e-300)
    lam = np.where(keep, lam, 0.0)
    y = _matvec(H.conj(), t) * root  # X^H t
    proj = _matvec(np.swapaxes(V.conj(), -1, -2), y)
    with np.errstate(divide="ignore", invalid="ignore"):
        w2 = np.where(keep, np.abs(proj) ** 2 / lam, 0.0)
        inv = np.where(keep, 1.0 / lam, 0.0)
    coeff = _matvec(V, inv * proj) * root  # pinv(G) y, scaled back to the channels
    t_perp = t - _matvec(np.swapaxes(H, -1, -2), coeff)
    perp = np.sum(np.abs(t_perp) ** 2, axis=-1)
    lam_all = np.concatenate([lam, np.zeros((len(lam), 1))], axis=-1)
    w2_all = np.concatenate([w2, perp[:, None]], axis=-1)
    return LowRankSystem(lam_all, w2_all, V, y, root, t_perp, keep)


def _power(lam, w2, z):
    """Power of the closed-form beams at multipliers z > 0; lam, w2 are (N, M)."""
    return np.einsum("nm,nm->n", w2, (lam + z[:, None]) ** -2.0)


def bisect_power_dual(lam: np.ndarray, w2: np.ndarray, serving: np.ndarray,
                      budget: np.ndarray, tol: float) -> np.ndarray:
    """Smallest z_b >= 0 whose beams fit each RRU's power budget.

    Returns 0 where the beams at z_b = 0 (ridge-regularized) already fit;
    otherwise z_b with budget (1 - tol) <= power(z_b) <= budget. ``lam`` and
    ``w2`` are (..., K, M): eigenvalues of each A[b, k] and the squared
    projections of t[b, k] on its eigenvectors; ``serving`` is (..., K) and
    ``budget`` has the leading shape.
    """
    budget = np.asarray(budget, dtype=float)
    shape = budget.shape
    budget = budget.reshape(-1)
    N = len(budget)
    w2 = (w2 * serving[..., None]).reshape(N, -1)
    lam = np.maximum(lam, 0.0).reshape(N, -1)
    active = _power(np.maximum(lam, RIDGE), w2, np.zeros(N)) > budget
    if not np.any(active):
        return np.zeros(shape)
    # sum(w2) / (max(lam) + z)^2 <= power(z) <= sum(w2) / z^2 brackets the root
    root = np.sqrt(w2.sum(axis=1) / budget)
    hi = np.where(active, root, 1.0)
    lo = np.maximum(root - lam.max(axis=1), 0.0)
    p_hi = _power(lam, w2, hi)
    done = ~active | (p_hi >= budget * (1.0 - tol))
    for _ in range(MAX_BISECTION_STEPS):
        if np.all(done):
            break
        mid = 0.5 * (lo + hi)
        p_mid = _power(lam, w2, mid)
        feasible = p_mid <= budget
        move_hi = ~done & feasible
        hi = np.where(move_hi, mid, hi)
        p_hi = np.where(move_hi, p_mid, p_hi)
        lo = np.where(~done & ~feasible, mid, lo)
        done = done | (p_hi >= budget * (1.0 - tol))
    else:
        n = int(np.argmax(~done))
        raise BisectionError(f"power multiplier {np.unravel_index(n, shape)} did not converge",
                             (float(lo[n]), float(hi[n])))
    return np.where(active, hi, 0.0).reshape(shape)


def best_beams(prob: Problem, a: np.ndarray, it_products, pt_products, gamma_pt: np.ndarray,
               tol: float):
    """Closed-form beams of every (d, b, k) and the power multipliers (D, B).

    Only served pairs are solved; the rest stay zero.
    """
    alpha, t = multipliers_and_rhs(prob, a, it_products, pt_products, gamma_pt)
    d, b, k = np.nonzero(prob.serving)
    K = prob.num_users
    root = np.sqrt(np.maximum(alpha[d, b], 0.0))
    root[np.arange(len(k)), k] = 0.0
    H = prob.H[d, b]
    gram = prob.gram[d, b]
    sysm = lowrank_system(H, gram, root, t[d, b, k])
    shape = prob.serving.shape
    lam = np.zeros(shape + (K + 1,))
    w2 = np.zeros(shape + (K + 1,))
    lam[d, b, k] = sysm.lam
    w2[d, b, k] = sysm.w2
    z = bisect_power_dual(lam, w2, prob.serving, prob.power, tol)
    F = np.zeros(prob.H.shape, dtype=complex)
    F[d, b, k] = sysm.beams(H, z[d, b])
    return F, z


def best_beams_dense(prob: Problem, a: np.ndarray, F_it: np.ndarray, F_pt: np.ndarray,
                     gamma_pt: np.ndarray, tol: float):
    """Reference path with full Nt x Nt eigendecompositions."""
    A, t = system_terms(prob, a, F_it, F_pt, gamma_pt)
    lam, V, w2 = spectral_dense(A, t)
    z = bisect_power_dual(lam, w2, prob.serving, prob.power, tol)
    lam_z = np.where(z[..., None, None] > 0, lam, np.maximum(lam, RIDGE)) + z[..., None, None]
    proj = np.einsum("...nm,...n->...m", V.conj(), t)
    F_star = np.einsum("...nm,...m->...n", V, proj / lam_z)
    return F_star * prob.serving[..., None], z


def best_response_step(F_prev: np.ndarray, F_star: np.ndarray, psi: float) -> np.ndarray:
    """f <- f + psi (f* - f); for psi <= 1 a convex combination of feasible beams."""
    return F_prev + psi * (F_star - F_prev)


def gamma_update(prob: Problem, a: np.ndarray, total_pt: np.ndarray, gamma_pt: np.ndarray,
                 cap: Optional[np.ndarray] = None) -> np.ndarray:
    """SINR targets from the stationarity condition in gamma, clamped to [0, cap].

    gamma_k = w_k / (sum_c a_kc T_kc / (1 + gamma_pt_k)^2) - 1 with T the
    row totals (noise plus all received power) at the approximation point.
    """
    denom = prob.user_sum(a * total_pt) / (1.0 + gamma_pt) ** 2
    w = np.broadcast_to(prob.weights, denom.shape)
    bad = (denom <= 0) & (w > 0)
    if np.any(bad):
        d, k = np.argwhere(bad)[0]
        raise DualContractError(f"user {k} of drop {d} has no positive subset dual")
    g = np.where(w > 0, w / np.where(denom > 0, denom, 1.0) - 1.0, 0.0)
    g = np.maximum(g, 0.0)
    if cap is not None:
        g = np.minimum(g, cap)
    return g


def dual_subgradient_update(a: np.ndarray, beta: float, violation: np.ndarray) -> np.ndarray:
    """Projected subgradient step a <- max(0, a + beta * violation)."""
    return np.maximum(0.0, a + beta * violation)


def keep_dual_positive(prob: Problem, a: np.ndarray, sinrs: np.ndarray, total: np.ndarray,
                       gammas: np.ndarray, cap: np.ndarray) -> np.ndarray:
    """Re-seed the binding multiplier of users whose duals all hit zero.

    The seed is the smallest value that keeps the next SINR target within
    `cap`, so the stationarity update stays finite.
    """
    mass = prob.user_sum(a)
    dead = (mass <= 0) & (prob.weights > 0)
    if not np.any(dead):
        return a
    a = a.copy()
    for d, k in np.argwhere(dead):
        rows = np.flatnonzero(prob.user == k)
        r = rows[np.argmin(sinrs[d, rows])]
        a[d, r] = prob.weights[k] * (1.0 + gammas[d, k]) ** 2 / (total[d, r] * (1.0 + cap[d, k]))
    return a


# ----------------------------------------------------------------------------
# driver


@dataclass
class _Run:
    """Batched bookkeeping: traces, best iterates and invariant extremes per drop."""

    objective: np.ndarray  # (iters + 1, D), nan once a drop stopped
    violation: np.ndarray
    power: Optional[np.ndarray]  # (iters + 1, D, B) when recorded
    best: np.ndarray
    best_iter: np.ndarray
    best_beams: np.ndarray
    best_gammas: np.ndarray
    best_a: np.ndarray
    best_z: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    max_power_ratio: np.ndarray
    min_a: np.ndarray
    min_z: np.ndarray
    min_gamma: np.ndarray

    @classmethod
    def start(cls, state: SolverState, max_iters: int, record_power: bool) -> "_Run":
        D, B = state.duals.z.shape
        nan = np.full((max_iters + 1, D), np.nan)
        return cls(nan, nan.copy(), np.full((max_iters + 1, D, B), np.nan) if record_power else None,
                   np.full(D, -np.inf), np.zeros(D, dtype=int), state.beams.copy(),
                   state.gammas.copy(), state.duals.a.copy(), state.duals.z.copy(),
                   np.zeros(D, dtype=int), np.zeros(D, dtype=bool), np.zeros(D),
                   np.full(D, np.inf), np.full(D, np.inf), np.full(D, np.inf))

    def log(self, it, idx, obj, viol, F, gam, a, z, budget) -> None:
        power = np.sum(np.abs(F) ** 2, axis=(2, 3))
        self.objective[it, idx] = obj
        self.violation[it, idx] = viol
        if self.power is not None:
            self.power[it, idx] = power
        self.iterations[idx] = it
        self.max_power_ratio[idx] = np.maximum(self.max_power_ratio[idx], np.max(power / budget, axis=1))
        self.min_a[idx] = np.minimum(self.min_a[idx], a.min(axis=1))
        self.min_z[idx] = np.minimum(self.min_z[idx], z.min(axis=1))
        self.min_gamma[idx] = np.minimum(self.min_gamma[idx], gam.min(axis=1))
        better = obj > self.best[idx]
        if np.any(better):
            j = idx[better]
            self.best[j] = obj[better]
            self.best_iter[j] = it
            self.best_beams[j] = F[better]
            self.best_gammas[j] = gam[better]
            self.best_a[j] = a[better]
            self.best_z[j] = z[better]

    def result(self, prob: Problem, d: int) -> SolverResult:
        n = self.iterations[d] + 1
        one = prob.take(np.array([d]))
        _, s = one.products(self.best_beams[d][None])
        achieved = one.user_min(one.row_sinr(s))[0]
        hyg = Hygiene(float(self.max_power_ratio[d]), float(self.min_a[d]),
                      float(self.min_z[d]), float(self.min_gamma[d]))
        return SolverResult(
            beams=BeamformerSet(self.best_beams[d], one.serving[0]),
            gammas=achieved,
            gamma_iterate=self.best_gammas[d],
            duals=DualState(self.best_a[d], self.best_z[d]),
            objective_trace=self.objective[:n, d].copy(),
            violation_trace=self.violation[:n, d].copy(),
            power_trace=self.power[:n, d].copy() if self.power is not None else np.empty((0,)),
            converged=bool(self.converged[d]),
            iterations=int(self.iterations[d]),
            family=prob.families[d],
            objective=weighted_sum_rate(achieved, prob.weights),
            best_iteration=int(self.best_iter[d]),
            hygiene=hyg,
        )


def run_kkt(prob: Problem, state: SolverState, cfg: SystemConfig, max_iters: Optional[int] = None,
            point: str = "achieved", record_power: bool = False) -> _Run:
    """Iterate the closed-form steps from ``state`` on every drop of the batch.

    The approximation point follows the iterate. ``point`` picks its SINR
    part: "achieved" uses the pessimistic SINR of the current beams (a
    feasible, tangent point); "iterate" uses the solver's own targets, which
    feeds the target update back into itself and tends to swing between 0
    and the cap. Each drop stops on its own when its objective moved less
    than ``cfg.convergence_tol`` (relative), comparing the mean of the last
    WINDOW iterations with the mean of the WINDOW before;
    the best iterate seen is kept.
    """
    if point not in ("achieved", "iterate"):
        raise ValueError(f"unknown point rule {point!r}")
    psi, beta, tol = cfg.best_response_step, cfg.subgrad_step, cfg.bisection_tol
    max_iters = cfg.kkt_max_iters if max_iters is None else max_iters
    run = _Run.start(state, max_iters, record_power)
    idx = np.arange(prob.num_drops)
    sub = prob
    F, gam, a, z = state.beams, state.gammas, state.duals.a, state.duals.z
    cap = sub.gamma_cap()
    prods = sub.products(F)
    sinrs = sub.row_sinr(prods[1])
    achieved = sub.user_min(sinrs)
    viol0 = np.max(np.maximum(gam[:, sub.user] - sinrs, 0.0), axis=1)
    run.log(0, idx, sub.objective(achieved), viol0, F, gam, a, z, sub.power)
    for it in range(1, max_iters + 1):
        g_pt = np.minimum(achieved, cap) if point == "achieved" else gam
        F_star, z = best_beams(sub, a, prods, prods, g_pt, tol)
        F_new = best_response_step(F, F_star, psi)
        _, total_pt = sub.row_terms(prods[1])
        gam = gamma_update(sub, a, total_pt, g_pt, cap)
        prods = sub.products(F_new)
        sinrs = sub.row_sinr(prods[1])
        achieved = sub.user_min(sinrs)
        viol = gam[:, sub.user] - sinrs
        a = dual_subgradient_update(a, beta, viol)
        _, total = sub.row_terms(prods[1])
        a = keep_dual_positive(sub, a, sinrs, total, gam, cap)
        F = F_new
        obj = sub.objective(achieved)
        run.log(it, idx, obj, np.max(np.maximum(viol, 0.0), axis=1), F, gam, a, z, sub.power)
        if it < 2 * WINDOW:
            continue
        new = run.objective[it - WINDOW + 1:it + 1, idx].mean(axis=0)
        old = run.objective[it - 2 * WINDOW + 1:it - WINDOW + 1, idx].mean(axis=0)
        stop = np.abs(new - old) <= cfg.convergence_tol * np.maximum(np.abs(new), 1e-12)
        if not np.any(stop):
            continue
        run.converged[idx[stop]] = True
        keep = ~stop
        if not np.any(keep):
            break
        idx = idx[keep]
        sub = prob.take(idx)
        F, gam, a, z = F[keep], gam[keep], a[keep], z[keep]
        cap, achieved = cap[keep], achieved[keep]
        prods = (prods[0][keep], prods[1][keep])
    return run


def solve_problem(prob: Problem, cfg: SystemConfig, init: str = "mrt", rngs=None,
                  record_power: bool = False, point: str = "achieved") -> list[SolverResult]:
    state = init_feasible(prob, init, rngs)
    run = run_kkt(prob, state, cfg, record_power=record_power, point=point)
    return [run.result(prob, d) for d in range(prob.num_drops)]


def solve(H: np.ndarray, serving_sets, cfg: SystemConfig, init: str = "mrt",
          rng: Optional[np.random.Generator] = None, floor: Optional[int] = None,
          record_power: bool = False) -> SolverResult:
    """Blockage-aware beamformers for one channel ``H`` (B, K, Nt)."""
    prob = Problem.single(H, serving_sets, cfg, floor)
    if init == "random" and rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    return solve_problem(prob, cfg, init, None if rng is None else [rng], record_power)[0]


def solve_batch(channels: Sequence[np.ndarray], serving_sets: Sequence, cfg: SystemConfig,
                init: str = "mrt", rngs=None, floor: Optional[int] = None,
                record_power: bool = False) -> list[SolverResult]:
    """Solve independent drops together; each result matches its own `solve` run."""
    prob = Problem.build(channels, serving_sets, cfg, floor)
    return solve_problem(prob, cfg, init, rngs, record_power)
