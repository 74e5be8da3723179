"""Empirical checks of every closed-form bound the method guarantees.

Each check produces a BoundCheck row comparing a Monte Carlo estimate
against an analytic right-hand side.  Bounds are inequalities, so the
3-standard-error slack is granted to the estimate (margin = rhs - lhs +
3*stderr); a pass with margin below one standard error is flagged tight.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .belief import moments
from .rollout import run_closed_loop
from .source import second_moment_bound, simulate_batch


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    stderr: float
    rhs: float
    details: dict = field(default_factory=dict, compare=False)

    @property
    def margin(self):
        return self.rhs - self.lhs + 3.0 * self.stderr

    @property
    def passed(self):
        return self.margin >= 0.0

    @property
    def tight(self):
        """Pass with less than one standard error to spare."""
        return self.passed and (self.rhs - self.lhs) < self.stderr


def checks_to_csv(checks, path):
    """One row per check: name, lhs, stderr, rhs, margin, pass."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "lhs", "stderr", "rhs", "margin", "pass"])
        for c in checks:
            writer.writerow([c.name, repr(c.lhs), repr(c.stderr),
                             repr(c.rhs), repr(c.margin), int(c.passed)])


# ---------------------------------------------------------------------------
# bound constants (pure functions of model and initial moments)

def k2_constant(m_mu, sigma_sq, alpha):
    """K2 = E||Y0||^2 + sigma^2/(1 - alpha) from the coupling argument."""
    return m_mu + sigma_sq / (1.0 - alpha)


def k1_constant(m_mu, sigma_sq, alpha):
    return math.sqrt(k2_constant(m_mu, sigma_sq, alpha))


def equicontinuity_bound(rho2, alpha, k1):
    """(rho2/(1-alpha) + 2 K1/(1-sqrt(alpha))) * rho2."""
    return (rho2 / (1.0 - alpha) + 2.0 * k1 / (1.0 - math.sqrt(alpha))) * rho2


def g_bound(rho2, alpha, k1):
    """Relative-value envelope g: same form as the equicontinuity bound."""
    return equicontinuity_bound(rho2, alpha, k1)


def g1_bound(m_pi, m_mu, alpha, k1):
    """Moment-only envelope g1 dominating g via rho2^2 <= 2 m_pi + 2 m_mu."""
    return (2.0 / (1.0 - alpha) * (m_pi + m_mu)
            + 2.0 * k1 / (1.0 - math.sqrt(alpha))
            * math.sqrt(2.0 * m_pi + 2.0 * m_mu))


def rate_constant(m0, sigma_sq, alpha):
    """K(pi0) bounding T * |J_T - J_inf| for the stationary policy."""
    k1 = k1_constant(m0, sigma_sq, alpha)
    return (2.0 / (1.0 - alpha) * (2.0 * m0 + sigma_sq / (1.0 - alpha))
            + 2.0 * k1 / (1.0 - math.sqrt(alpha))
            * math.sqrt(4.0 * m0 + 2.0 * sigma_sq / (1.0 - alpha)))


def discounted_bound(m0, sigma_sq, alpha, beta):
    """(1/(1-beta)) (m0 + sigma^2/(1-alpha)), the discounted value cap."""
    return (m0 + sigma_sq / (1.0 - alpha)) / (1.0 - beta)


# ---------------------------------------------------------------------------
# Monte Carlo checks

def check_second_moment(model, init, T, n_traj, seed, alpha_override=None):
    """E||X_t||^2 estimated over trajectories vs the analytic chain bound.

    alpha_override feeds a wrong contraction constant into the bound formula
    (negative-control hook for the test suite).
    """
    paths = simulate_batch(model, init, T, n_traj, seed)
    sq = np.sum(paths ** 2, axis=2)               # (n, T+1)
    mean_t = sq.mean(axis=0)
    stderr_t = sq.std(axis=0, ddof=1) / math.sqrt(n_traj) if n_traj > 1 \
        else np.zeros(T + 1)
    m0 = init.second_moment()
    alpha = model.alpha if alpha_override is None else float(alpha_override)
    s2 = model.noise.sigma_sq
    bounds = np.array([
        (alpha ** t) * m0 + s2 * (1.0 - alpha ** t) / (1.0 - alpha)
        for t in range(T + 1)])
    margins = bounds - mean_t + 3.0 * stderr_t
    worst = int(np.argmin(margins))
    return BoundCheck("second_moment", float(mean_t[worst]),
                      float(stderr_t[worst]), float(bounds[worst]),
                      details={"worst_t": worst, "T": T, "n_traj": n_traj,
                               "cap": second_moment_bound(model, m0, None)})


def check_discounted_bound(model, policy, init, beta, n_traj, T_trunc, seed):
    """Estimated discounted policy cost vs (1/(1-beta))(m0 + sigma^2/(1-a))."""
    res = run_closed_loop(model, policy, init, T_trunc, n_traj, seed,
                          beta=beta)
    lhs = float(np.mean(res.disc_per_traj))
    stderr = float(np.std(res.disc_per_traj, ddof=1) / math.sqrt(n_traj)) \
        if n_traj > 1 else 0.0
    rhs = discounted_bound(init.second_moment(), model.noise.sigma_sq,
                           model.alpha, beta)
    trunc = beta ** T_trunc * rhs * (1.0 - beta)
    return BoundCheck("discounted_cost", lhs, stderr, rhs,
                      details={"beta": beta, "T_trunc": T_trunc,
                               "truncation_cap": trunc})


def check_value_table_cap(table, cover, model):
    """Every table entry vs (1/(1-beta))(m(pi_k) + sigma^2/(1-alpha))."""
    caps = np.array([
        discounted_bound(moments(rep)[1], model.noise.sigma_sq, model.alpha,
                         table.beta)
        for rep in cover.representatives])
    gaps = caps - table.values
    worst = int(np.argmin(gaps))
    return BoundCheck("value_table_cap", float(table.values[worst]), 0.0,
                      float(caps[worst]),
                      details={"worst_rep": worst, "beta": table.beta})


def check_equicontinuity(model, nu0, mu0, beta, policy_for_mu, n_traj,
                         T_trunc, seed):
    """The coupling construction behind the value equicontinuity bound.

    The mu0 system runs its policy; a nu0 copy shares the noise, mimics the
    mu0 symbols, and reuses the reproductions.  The resulting upper estimate
    of |J_beta(nu0) - J_beta(mu0)| is compared against
    (rho2/(1-alpha) + 2 K1/(1-sqrt(alpha))) rho2, and the pathwise coupling
    identity ||X_t - Y_t||^2 <= alpha^t ||X0 - Y0||^2 is checked as well.
    """
    if nu0.point is None or mu0.point is None:
        raise NotImplementedError(
            "coupled check requires point-mass initial distributions")
    rho2 = float(np.linalg.norm(nu0.point - mu0.point))
    shadow = np.atleast_1d(nu0.point)
    res = run_closed_loop(model, policy_for_mu, mu0, T_trunc, n_traj, seed,
                          beta=beta, shadow_x0=shadow)
    diff = res.shadow_disc_per_traj - res.disc_per_traj
    lhs = abs(float(np.mean(diff)))
    stderr = float(np.std(diff, ddof=1) / math.sqrt(n_traj)) if n_traj > 1 \
        else 0.0
    m_mu = mu0.second_moment()
    k1 = k1_constant(m_mu, model.noise.sigma_sq, model.alpha)
    rhs = equicontinuity_bound(rho2, model.alpha, k1)
    return BoundCheck(f"equicontinuity_beta{beta:g}", lhs, stderr, rhs,
                      details={"rho2": rho2, "K1": k1,
                               "coupling_max_ratio": res.coupling_max_ratio,
                               "coupling_excess": res.coupling_excess,
                               "beta": beta, "T_trunc": T_trunc})


def check_rate(model, policy, init, T_grid, n_traj, seed, horizon_factor=8):
    """Finite-horizon convergence: T |J_T - J_inf| vs K(pi0), plus the slope.

    J_inf is the time average at horizon_factor * max(T_grid) on the same
    trajectories, so the differences are paired.  Returns the K-bound check
    and a log-log slope check (slope <= -0.8).
    """
    grid = sorted(int(t) for t in T_grid)
    T_inf = horizon_factor * grid[-1]
    res = run_closed_loop(model, policy, init, T_inf, n_traj, seed,
                          grid=grid)
    j_inf = res.final_avg_per_traj
    m0 = init.second_moment()
    k_const = rate_constant(m0, model.noise.sigma_sq, model.alpha)
    lhs_worst, stderr_worst, t_worst = -np.inf, 0.0, grid[0]
    gaps = []
    for col, T in enumerate(res.grid):
        diff = res.grid_avgs[:, col] - j_inf
        gap = abs(float(np.mean(diff)))
        se = float(np.std(diff, ddof=1) / math.sqrt(n_traj)) if n_traj > 1 \
            else 0.0
        gaps.append((int(T), gap, se))
        if T * gap - 3.0 * T * se > lhs_worst - 3.0 * stderr_worst:
            lhs_worst, stderr_worst, t_worst = T * gap, T * se, int(T)
    bound_check = BoundCheck("rate_constant", float(lhs_worst),
                             float(stderr_worst), float(k_const),
                             details={"worst_T": t_worst, "gaps": gaps,
                                      "T_inf": T_inf})
    logs = [(math.log(t), math.log(g)) for t, g, _ in gaps if g > 0]
    if len(logs) >= 2:
        xs = np.array([p[0] for p in logs])
        ys = np.array([p[1] for p in logs])
        slope = float(np.polyfit(xs, ys, 1)[0])
    else:
        slope = -np.inf
    slope_check = BoundCheck("rate_slope", slope, 0.0, -0.8,
                             details={"gaps": gaps})
    return bound_check, slope_check


def check_receiver_convergence(belief_seq, q_seq, gap_tol=1e-3):
    """Centroid decoders along a convergent (belief, quantizer) sequence.

    The limit decoder is computed from the last element; cells with zero
    limit mass are excluded.  Passes when the final centroid gap is below
    gap_tol.
    """
    from .belief import symbol_probs
    from .coding import optimal_decoder
    b_lim, q_lim = belief_seq[-1], q_seq[-1]
    p_lim = symbol_probs(b_lim, q_lim)
    live = p_lim > 0
    gamma_lim = optimal_decoder(b_lim, q_lim).points
    gaps = []
    for b, q in zip(belief_seq, q_seq):
        g = optimal_decoder(b, q).points
        gaps.append(float(np.max(np.linalg.norm(
            (g - gamma_lim)[live], axis=1))))
    return BoundCheck("receiver_convergence", gaps[-1], 0.0, gap_tol,
                      details={"gaps": gaps, "live_cells": int(live.sum())})
