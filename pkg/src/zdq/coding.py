"""Stage cost, the centroid decoder, and closed-loop distortion evaluation.

The stage cost of (belief, quantizer) is the minimum expected squared error
any decoder can achieve, attained by the per-cell conditional mean; it equals
the total within-cell variance and never exceeds the belief second moment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Codebook:
    """One reproduction point per cell, shape (M, d)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not np.all(np.isfinite(pts)):
            raise ValueError("codebook contains non-finite entries")
        object.__setattr__(self, "points", pts)


def optimal_decoder(belief, q):
    """Centroid codebook: conditional mean per cell, the site if mass is 0.

    Means accumulate relative to one member per cell, so a cell whose
    particles coincide reproduces that point exactly.
    """
    members = q.encode_batch(belief.particles)
    ref = q.sites.copy()
    uniq, first_idx = np.unique(members, return_index=True)
    ref[uniq] = belief.particles[first_idx]
    wsum = np.zeros(q.M)
    vsum = np.zeros((q.M, q.dim))
    np.add.at(wsum, members, belief.weights)
    np.add.at(vsum, members,
              belief.weights[:, None] * (belief.particles - ref[members]))
    points = q.sites.copy()
    occupied = wsum > 0
    points[occupied] = (ref[occupied]
                        + vsum[occupied] / wsum[occupied, None])
    return Codebook(points)


def stage_cost(belief, q):
    """Total within-cell variance of the belief under the quantizer."""
    members = q.encode_batch(belief.particles)
    u = optimal_decoder(belief, q).points
    diff = belief.particles - u[members]
    return float(belief.weights @ np.sum(diff ** 2, axis=1))


@dataclass(frozen=True)
class CostReport:
    """Per-step distortion summary of a closed-loop evaluation."""

    horizon: int
    n_trajectories: int
    per_step_mean: np.ndarray
    per_step_stderr: np.ndarray
    running_avg: np.ndarray
    beta: float | None = None
    discounted_partial: np.ndarray | None = None
    discounted_total: float | None = None
    discounted_stderr: float | None = None

    @property
    def average_cost(self):
        return float(self.running_avg[-1])

    @property
    def average_stderr(self):
        """Stderr of the time-averaged cost (across trajectories)."""
        return float(np.sqrt(np.sum(self.per_step_stderr ** 2)) / self.horizon)

    def to_csv(self, path):
        """Columns t, mean_cost, stderr, running_avg, discounted_partial."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t", "mean_cost", "stderr", "running_avg", "discounted_partial"])
            for t in range(self.horizon):
                disc = ("" if self.discounted_partial is None
                        else repr(float(self.discounted_partial[t])))
                writer.writerow([t,
                                 repr(float(self.per_step_mean[t])),
                                 repr(float(self.per_step_stderr[t])),
                                 repr(float(self.running_avg[t])),
                                 disc])


def make_cost_report(cost_sum, cost_sq_sum, n_traj, beta=None,
                     disc_per_traj=None):
    """Assemble a CostReport from per-step accumulators."""
    T = cost_sum.shape[0]
    mean = cost_sum / n_traj
    var = np.maximum(cost_sq_sum / n_traj - mean ** 2, 0.0)
    stderr = np.sqrt(var / n_traj)
    running = np.cumsum(mean) / np.arange(1, T + 1)
    disc_partial = None
    disc_total = None
    disc_stderr = None
    if beta is not None:
        disc_partial = np.cumsum(mean * beta ** np.arange(T))
        disc_total = float(np.mean(disc_per_traj))
        disc_stderr = float(np.std(disc_per_traj, ddof=1) / np.sqrt(n_traj)) \
            if n_traj > 1 else 0.0
    return CostReport(T, n_traj, mean, stderr, running, beta,
                      disc_partial, disc_total, disc_stderr)


def evaluate_policy(model, policy, init, T, n_trajectories, seed, beta=None):
    """Closed-loop distortion of a stationary policy.

    Runs belief -> quantizer -> encode the true state -> centroid decoder ->
    distortion -> filter on both ends, averaging c0(X_t, U_t) over
    trajectories.  The decoder side reconstructs its belief from the symbol
    stream alone; any divergence from the encoder filter raises.
    """
    from .rollout import run_closed_loop
    res = run_closed_loop(model, policy, init, T, n_trajectories, seed,
                          beta=beta)
    return make_cost_report(res.cost_sum, res.cost_sq_sum, n_trajectories,
                            beta=beta, disc_per_traj=res.disc_per_traj)
