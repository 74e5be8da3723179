"""Dynamic programming over a finite Wasserstein cover of the belief space.

The reachable beliefs are discretized by a greedy ρ2-net; the belief
transition kernel is then frozen once per (model, cover, actions, seed):
next-belief samples and their nearest-representative projections are fixed,
making the discounted backup a genuine contraction on a finite MDP.  The
average-cost policy comes out of a vanishing-discount sweep over an
increasing β schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import (Belief, filter_update, nearest_representative,
                     symbol_probs, wasserstein2)
from .coding import optimal_decoder, stage_cost
from .errors import BudgetExceeded, NotConverged
from .rng import COVER, KERNEL, substream

DEFAULT_COVER_CAP = 512
DEFAULT_MASS_FLOOR = 1e-9


@dataclass(frozen=True)
class BeliefCover:
    """Greedy ρ2-net of visited beliefs; index 0 is the initial belief."""

    representatives: list
    radius: float
    provenance: str = ""

    @property
    def size(self):
        return len(self.representatives)


def build_cover(model, actions, init, n_rollouts, T, radius, seed,
                cap=DEFAULT_COVER_CAP, n_particles=64,
                mass_floor=DEFAULT_MASS_FLOOR):
    """Archive beliefs from uniformly randomized rollouts, keep a greedy net.

    Every archived belief ends up within `radius` of some representative and
    representatives are pairwise more than `radius` apart.  Deterministic
    given the seed.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng0 = substream(seed, COVER, 0)
    init_belief = init.as_belief(n_particles, rng0)
    reps = [init_belief]

    def admit(b):
        dmin = np.inf
        for r in reps:
            dmin = min(dmin, wasserstein2(b, r))
            if dmin <= radius:
                return
        if len(reps) >= cap:
            raise BudgetExceeded(
                f"cover exceeded cap {cap} at radius {radius}")
        reps.append(b)

    for r in range(n_rollouts):
        rng = substream(seed, COVER, 1, r)
        x = init.sample(rng, 1)[0]
        belief = init_belief
        for _ in range(T):
            a = int(rng.integers(len(actions)))
            q = actions[a]
            sym = q.encode(x)
            belief = filter_update(belief, model, q, sym, n_particles, rng,
                                   mass_floor=mass_floor)
            admit(belief)
            x = model.A @ x + model.noise.sample(rng, 1)[0]
    prov = (f"rollouts={n_rollouts} T={T} radius={radius} "
            f"n_particles={n_particles} seed={seed}")
    return BeliefCover(reps, radius, prov)


@dataclass(frozen=True)
class FrozenKernel:
    """Finite belief MDP: stage costs, symbol probs, projected successors.

    succ[k, a, i] is the representative nearest to the sampled next belief
    after symbol i; entries with probs below the mass floor carry zero
    probability and successor -1 (skipped with zero weight in backups).
    """

    stage_costs: np.ndarray   # (K, A)
    probs: np.ndarray         # (K, A, M)
    succ: np.ndarray          # (K, A, M) int
    seed: int = 0

    @property
    def n_reps(self):
        return self.stage_costs.shape[0]

    @property
    def n_actions(self):
        return self.stage_costs.shape[1]


def freeze_kernel(model, cover, actions, n_particles, seed,
                  mass_floor=DEFAULT_MASS_FLOOR):
    """Sample and project the belief transitions once, with a fixed seed."""
    reps = cover.representatives
    K, A = len(reps), len(actions)
    M = max(q.M for q in actions)
    costs = np.zeros((K, A))
    probs = np.zeros((K, A, M))
    succ = np.full((K, A, M), -1, dtype=np.int64)
    for k, rep in enumerate(reps):
        for a, q in enumerate(actions):
            costs[k, a] = stage_cost(rep, q)
            p = symbol_probs(rep, q)
            for i in range(q.M):
                if p[i] < mass_floor:
                    continue
                rng = substream(seed, KERNEL, k, a, i)
                nb = filter_update(rep, model, q, i, n_particles, rng,
                                   mass_floor=mass_floor)
                probs[k, a, i] = p[i]
                succ[k, a, i] = nearest_representative(nb, reps)
    return FrozenKernel(costs, probs, succ, int(seed))


@dataclass(frozen=True)
class ValueTable:
    beta: float
    values: np.ndarray
    greedy: np.ndarray
    iterations: int
    sup_residual: float
    converged: bool


def bellman_backup(values, kernel, beta):
    """One discounted backup on the frozen kernel.

    Returns (new values, greedy action indices); ties in the min go to the
    lowest action index.
    """
    succ = np.maximum(kernel.succ, 0)
    cont = np.take(values, succ) * kernel.probs
    qv = kernel.stage_costs + beta * cont.sum(axis=2)
    return qv.min(axis=1), qv.argmin(axis=1)


def value_iteration(kernel, beta, tol=1e-6, max_iter=500_000):
    """Iterate the backup from v0 = 0 until the residual-based target.

    Stops when the sup-norm residual is at most tol*(1-beta)/(2*beta),
    which bounds the distance to the fixed point by tol/2.  A table is
    returned even without convergence, flagged converged=False.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must be in [0, 1)")
    threshold = tol if beta == 0.0 else tol * (1.0 - beta) / (2.0 * beta)
    v = np.zeros(kernel.n_reps)
    greedy = np.zeros(kernel.n_reps, dtype=np.int64)
    residual = np.inf
    it = 0
    while it < max_iter:
        v_new, greedy = bellman_backup(v, kernel, beta)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        it += 1
        if residual <= threshold:
            return ValueTable(beta, v, greedy, it, residual, True)
    return ValueTable(beta, v, greedy, it, residual, False)


@dataclass(frozen=True)
class StationaryPolicy:
    """Cover representative -> quantizer action, with cached decoders."""

    cover: BeliefCover
    actions: list
    action_map: np.ndarray
    decoders: np.ndarray       # (K, A, M, d) centroid codebooks
    n_particles: int

    @property
    def representatives(self):
        return self.cover.representatives

    def assign(self, belief):
        return nearest_representative(belief, self.cover.representatives)

    def action_for(self, belief):
        return self.actions[int(self.action_map[self.assign(belief)])]


def cache_decoders(cover, actions):
    """Centroid codebook for every (representative, action) pair."""
    K, A = len(cover.representatives), len(actions)
    M = max(q.M for q in actions)
    d = cover.representatives[0].dim
    out = np.zeros((K, A, M, d))
    for k, rep in enumerate(cover.representatives):
        for a, q in enumerate(actions):
            out[k, a, :q.M] = optimal_decoder(rep, q).points
    return out


@dataclass(frozen=True)
class AverageCostSolution:
    """Vanishing-discount output: gain, relative value, greedy policy."""

    rho_star: float
    h: np.ndarray
    policy: StationaryPolicy
    beta_schedule: tuple
    rho_trend: tuple
    mu_ref_index: int
    acoe_residual: float
    tables: tuple
    converged: bool


def vanishing_discount(kernel, beta_schedule, mu_ref_index=0, tol=1e-6,
                       max_iter=500_000):
    """Solve the discounted problem along the schedule and take the limit.

    rho_star = (1 - beta_last) J^{beta_last}(mu_ref), h = J^{beta_last}(.) -
    J^{beta_last}(mu_ref); the trend (1 - beta) J^beta(mu_ref) over the whole
    schedule is kept for flatness inspection.
    """
    schedule = tuple(float(b) for b in beta_schedule)
    if any(b2 <= b1 for b1, b2 in zip(schedule, schedule[1:])):
        raise ValueError("beta_schedule must be strictly increasing")
    tables = []
    trend = []
    for beta in schedule:
        table = value_iteration(kernel, beta, tol=tol, max_iter=max_iter)
        tables.append(table)
        trend.append((1.0 - beta) * float(table.values[mu_ref_index]))
    last = tables[-1]
    h = last.values - last.values[mu_ref_index]
    rho_star = trend[-1]
    return rho_star, h, tables, tuple(trend)


def acoe_residual(rho_star, h, kernel):
    """Sup-norm defect of (rho*, h) in the average-cost optimality equation."""
    succ = np.maximum(kernel.succ, 0)
    cont = np.take(h, succ) * kernel.probs
    rhs = (kernel.stage_costs + cont.sum(axis=2)).min(axis=1)
    return float(np.max(np.abs(rho_star + h - rhs)))


def design_policy(model, cover, actions, beta_schedule, n_particles, seed,
                  mu_ref_index=0, tol=1e-6, max_iter=500_000,
                  mass_floor=DEFAULT_MASS_FLOOR, strict=False):
    """Freeze the kernel, run the vanishing-discount sweep, wrap the policy."""
    kernel = freeze_kernel(model, cover, actions, n_particles, seed,
                           mass_floor=mass_floor)
    rho_star, h, tables, trend = vanishing_discount(
        kernel, beta_schedule, mu_ref_index=mu_ref_index, tol=tol,
        max_iter=max_iter)
    converged = all(t.converged for t in tables)
    if strict and not converged:
        worst = max(t.sup_residual for t in tables if not t.converged)
        raise NotConverged(f"value iteration residual {worst:.3e} above target")
    policy = StationaryPolicy(cover, list(actions), tables[-1].greedy.copy(),
                              cache_decoders(cover, actions), n_particles)
    residual = acoe_residual(rho_star, h, kernel)
    return AverageCostSolution(rho_star, h, policy, tuple(beta_schedule),
                               trend, mu_ref_index, residual,
                               tuple(tables), converged), kernel
