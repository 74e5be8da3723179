"""Figure rendering for the CLI report paths.

Every subcommand that writes delimited output also renders a matplotlib
figure next to it.  All functions take precomputed arrays so the plotting
layer stays free of simulation logic.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_trajectory_figure(paths, out_path, max_shown=12):
    """First few simulated trajectories against time (one panel per coord)."""
    n, steps, d = paths.shape
    shown = min(n, max_shown)
    fig, axes = plt.subplots(d, 1, figsize=(7, 2.2 * d), sharex=True,
                             squeeze=False)
    t = np.arange(steps)
    for j in range(d):
        ax = axes[j, 0]
        for i in range(shown):
            ax.plot(t, paths[i, :, j], lw=0.8, alpha=0.7)
        ax.set_ylabel(f"x{j + 1}")
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("t")
    fig.suptitle(f"source trajectories (showing {shown} of {n})")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_rho_trend_figure(beta_schedule, rho_trend, out_path):
    """(1-beta) J^beta(mu) across the discount schedule."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = 1.0 - np.asarray(beta_schedule)
    ax.semilogx(x, rho_trend, "o-")
    ax.set_xlabel("1 - beta")
    ax.set_ylabel("(1 - beta) J_beta(mu)")
    ax.set_title("vanishing-discount trend")
    ax.grid(alpha=0.3, which="both")
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_cost_report_figure(report, out_path):
    """Per-step mean distortion with a 3-sigma band and the running average."""
    fig, ax = plt.subplots(figsize=(7, 4))
    t = np.arange(report.horizon)
    ax.plot(t, report.per_step_mean, lw=0.9, label="mean cost")
    ax.fill_between(t,
                    report.per_step_mean - 3 * report.per_step_stderr,
                    report.per_step_mean + 3 * report.per_step_stderr,
                    alpha=0.25, lw=0)
    ax.plot(t, report.running_avg, lw=1.4, label="running average")
    ax.set_xlabel("t")
    ax.set_ylabel("distortion")
    ax.set_title(f"closed-loop cost ({report.n_trajectories} trajectories)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_verify_figure(checks, out_path):
    """Margin per bound check (positive bars pass)."""
    fig, ax = plt.subplots(figsize=(7, 0.6 * max(len(checks), 4) + 1.5))
    names = [c.name for c in checks]
    margins = [c.margin for c in checks]
    colors = ["tab:green" if c.passed else "tab:red" for c in checks]
    ax.barh(names, margins, color=colors)
    ax.axvline(0.0, color="k", lw=1)
    ax.set_xlabel("margin = rhs - lhs + 3*stderr")
    ax.set_title("bound checks")
    ax.grid(alpha=0.3, axis="x")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_rate_figure(gaps, k_const, out_path):
    """|J_T - J_inf| vs T on log-log axes with the K/T reference line."""
    ts = np.array([g[0] for g in gaps], dtype=float)
    vals = np.array([g[1] for g in gaps])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ts, vals, "o-", label="|J_T - J_inf|")
    ax.loglog(ts, k_const / ts, "--", label="K(pi0)/T")
    ax.set_xlabel("T")
    ax.set_ylabel("gap")
    ax.set_title("finite-horizon convergence")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_cover_figure(solution, out_path):
    """Cover layout: representative means colored by greedy action."""
    from .belief import moments
    means = np.array([moments(r)[0]
                      for r in solution.policy.cover.representatives])
    acts = np.asarray(solution.policy.action_map)
    fig, ax = plt.subplots(figsize=(6, 4))
    if means.shape[1] == 1:
        m2 = [moments(r)[1] for r in solution.policy.cover.representatives]
        sc = ax.scatter(means[:, 0], m2, c=acts, cmap="tab10", s=30)
        ax.set_xlabel("belief mean")
        ax.set_ylabel("belief second moment")
    else:
        sc = ax.scatter(means[:, 0], means[:, 1], c=acts, cmap="tab10", s=30)
        ax.set_xlabel("belief mean x1")
        ax.set_ylabel("belief mean x2")
    fig.colorbar(sc, ax=ax, label="greedy action")
    ax.set_title(f"belief cover ({len(means)} representatives)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
