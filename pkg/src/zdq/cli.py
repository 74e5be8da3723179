"""Command-line harness: simulate | design | evaluate | verify | export.

Every report path writes delimited CSV output and renders a matplotlib
figure next to it.  Exit codes: 0 success, 2 configuration/usage error,
3 convergence failure under --strict, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import figures
from .belief import Belief, moments
from .config import build_init, build_model, load_config
from .errors import ConfigError, ModelMismatch, NotConverged, ZdqError
from .planner import build_cover, design_policy
from .policy_io import check_model_hash, load_policy, model_hash, save_policy
from .quantizer import design_action_library
from .rng import substream
from .source import simulate, simulate_batch
from .verify import (check_discounted_bound, check_equicontinuity, check_rate,
                     check_receiver_convergence, check_second_moment,
                     check_value_table_cap, checks_to_csv)

BOOT_SEED_TAG = 11
LIB_SEED_TAG = 12
COVER_SEED_TAG = 13
KERNEL_SEED_TAG = 14
EVAL_SEED_TAG = 15
VERIFY_SEED_TAG = 16


def _sub_seed(seed, tag):
    # derived integer seeds keep the per-stage substreams disjoint
    return int(substream(seed, tag).integers(2 ** 62))


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_trajectory_csv(path, traj):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{j + 1}" for j in range(traj.shape[1])])
        for t, row in enumerate(traj):
            writer.writerow([t] + [repr(float(v)) for v in row])


def cmd_simulate(cfg, out_dir):
    model = build_model(cfg)
    init = build_init(cfg)
    T = (cfg.evaluation.sim_T if cfg.evaluation.sim_T is not None
         else max(cfg.evaluation.T_grid))
    traj = simulate(model, init, T, cfg.run.seed)
    _write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), traj)
    batch = simulate_batch(model, init, T, min(12, max(cfg.evaluation.n_traj, 1)),
                           cfg.run.seed)
    figures.save_trajectory_figure(
        batch, os.path.join(out_dir, "simulate_trajectories.png"))
    m2 = np.mean(np.sum(traj ** 2, axis=1))
    print(f"wrote trajectory.csv ({T + 1} rows), "
          f"time-averaged second moment {m2:.6g}")
    return 0


def _design(cfg):
    """Shared design pipeline: bootstrap actions, cover, library, solve.

    The cover is built in two passes: a pilot cover under bootstrap actions
    seeds a first tailored library, whose randomized rollouts then span the
    same belief region the final policy visits.
    """
    model = build_model(cfg)
    init = build_init(cfg)
    seed = cfg.run.seed
    boot_paths = simulate_batch(model, init, cfg.cover.T, 64,
                                _sub_seed(seed, BOOT_SEED_TAG))
    boot_belief = Belief.equal(boot_paths.reshape(-1, model.dim))
    boot_lib = design_action_library([boot_belief], cfg.actions.M,
                                     cfg.actions.n_actions,
                                     cfg.actions.lloyd_iters,
                                     _sub_seed(seed, BOOT_SEED_TAG) + 1)
    pilot = build_cover(model, boot_lib, init,
                        max(2, cfg.cover.n_rollouts // 4),
                        cfg.cover.T, cfg.cover.radius,
                        _sub_seed(seed, COVER_SEED_TAG),
                        cap=cfg.cover.cap,
                        n_particles=cfg.cover.n_particles,
                        mass_floor=cfg.cover.mass_floor)
    pilot_lib = design_action_library(pilot.representatives, cfg.actions.M,
                                      cfg.actions.n_actions,
                                      cfg.actions.lloyd_iters,
                                      _sub_seed(seed, LIB_SEED_TAG))
    cover = build_cover(model, pilot_lib, init, cfg.cover.n_rollouts,
                        cfg.cover.T, cfg.cover.radius,
                        _sub_seed(seed, COVER_SEED_TAG) + 1,
                        cap=cfg.cover.cap,
                        n_particles=cfg.cover.n_particles,
                        mass_floor=cfg.cover.mass_floor)
    actions = design_action_library(cover.representatives, cfg.actions.M,
                                    cfg.actions.n_actions,
                                    cfg.actions.lloyd_iters,
                                    _sub_seed(seed, LIB_SEED_TAG) + 1)
    solution, kernel = design_policy(
        model, cover, actions, cfg.solver.beta_schedule,
        cfg.cover.n_particles, _sub_seed(seed, KERNEL_SEED_TAG),
        mu_ref_index=cfg.solver.mu_ref_index, tol=cfg.solver.tol,
        max_iter=cfg.solver.max_iter, mass_floor=cfg.cover.mass_floor)
    return model, init, solution, kernel


def cmd_design(cfg, out_dir, policy_path, strict):
    model, init, solution, kernel = _design(cfg)
    if policy_path is None:
        policy_path = os.path.join(out_dir, "policy.zdq")
    save_policy(policy_path, solution, model,
                seeds={"design": cfg.run.seed})
    report = {
        "model_hash": model_hash(model),
        "cover_size": solution.policy.cover.size,
        "n_actions": len(solution.policy.actions),
        "beta_schedule": list(solution.beta_schedule),
        "rho_trend": list(solution.rho_trend),
        "rho_star": solution.rho_star,
        "acoe_residual": solution.acoe_residual,
        "vi_iterations": [t.iterations for t in solution.tables],
        "vi_residuals": [t.sup_residual for t in solution.tables],
        "converged": solution.converged,
    }
    with open(os.path.join(out_dir, "design_report.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    with open(os.path.join(out_dir, "rho_trend.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "rho_estimate"])
        for b, r in zip(solution.beta_schedule, solution.rho_trend):
            writer.writerow([repr(float(b)), repr(float(r))])
    figures.save_rho_trend_figure(solution.beta_schedule, solution.rho_trend,
                                  os.path.join(out_dir, "design_rho_trend.png"))
    figures.save_cover_figure(solution,
                              os.path.join(out_dir, "design_cover.png"))
    print(f"policy written to {policy_path}: cover={report['cover_size']}, "
          f"rho*={solution.rho_star:.6g}, "
          f"acoe_residual={solution.acoe_residual:.3g}")
    if strict and not solution.converged:
        raise NotConverged("value iteration did not reach its residual target")
    return 0


def _load_for_eval(cfg, policy_path):
    model = build_model(cfg)
    init = build_init(cfg)
    solution, model_info, _ = load_policy(policy_path)
    check_model_hash(model, model_info, policy_path)
    return model, init, solution


def cmd_evaluate(cfg, out_dir, policy_path):
    from .coding import evaluate_policy
    model, init, solution = _load_for_eval(cfg, policy_path)
    grid = cfg.evaluation.T_grid
    report = evaluate_policy(model, solution.policy, init, max(grid),
                             cfg.evaluation.n_traj,
                             _sub_seed(cfg.run.seed, EVAL_SEED_TAG),
                             beta=cfg.evaluation.beta)
    report.to_csv(os.path.join(out_dir, "cost_report.csv"))
    with open(os.path.join(out_dir, "grid_costs.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["T", "J_T", "stderr"])
        for T in grid:
            jt = float(report.running_avg[T - 1])
            se = float(np.sqrt(np.sum(report.per_step_stderr[:T] ** 2)) / T)
            writer.writerow([T, repr(jt), repr(se)])
    figures.save_cost_report_figure(
        report, os.path.join(out_dir, "evaluate_cost.png"))
    print(f"average cost over T={max(grid)}: {report.average_cost:.6g} "
          f"(+- {report.average_stderr:.2g}); rho*={solution.rho_star:.6g}")
    return 0


def cmd_verify(cfg, out_dir, policy_path, threads):
    model, init, solution = _load_for_eval(cfg, policy_path)
    seed = _sub_seed(cfg.run.seed, VERIFY_SEED_TAG)
    policy = solution.policy
    beta_eval = cfg.evaluation.beta if cfg.evaluation.beta is not None else 0.9
    t_trunc = lambda b: int(math.ceil(math.log(1e-4) / math.log(b)))
    n_roll = cfg.evaluation.n_traj

    jobs = [
        ("second_moment", lambda: check_second_moment(
            model, init, 64, 100_000, seed)),
        ("value_table_cap", lambda: check_value_table_cap(
            solution.tables[-1], policy.cover, model)),
        ("discounted_cost", lambda: check_discounted_bound(
            model, policy, init, beta_eval, min(n_roll, 4096),
            t_trunc(beta_eval), seed + 1)),
        ("rate", lambda: check_rate(
            model, policy, init, cfg.evaluation.T_grid, n_roll, seed + 2)),
    ]
    if init.point is not None:
        for j, b in enumerate((0.9, 0.99)):
            jobs.append((f"equicontinuity_beta{b:g}",
                         lambda b=b, j=j: check_equicontinuity(
                             model,
                             type(init).point_mass(np.zeros(model.dim)),
                             init, b, policy, min(n_roll, 2048),
                             t_trunc(b), seed + 3 + j)))
    rep0 = policy.cover.representatives[0]
    q0 = policy.actions[0]
    rng = substream(seed, 99)
    delta = rng.standard_normal(q0.sites.shape)
    belief_seq, q_seq = [], []
    for n in range(1, 33):
        from .quantizer import ConvexQuantizer
        q_seq.append(ConvexQuantizer(q0.sites + delta / n, q0.weights))
        belief_seq.append(rep0)
    jobs.append(("receiver_convergence",
                 lambda: check_receiver_convergence(belief_seq, q_seq)))

    def run_job(job):
        return job[1]()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(run_job, jobs))
    else:
        raw = [run_job(j) for j in jobs]
    checks = []
    for item in raw:
        if isinstance(item, tuple):
            checks.extend(item)
        else:
            checks.append(item)
    checks_to_csv(checks, os.path.join(out_dir, "bound_checks.csv"))
    figures.save_verify_figure(checks,
                               os.path.join(out_dir, "verify_margins.png"))
    for c in checks:
        flag = "PASS" if c.passed else "FAIL"
        note = " (tight)" if c.tight else ""
        print(f"{flag}{note} {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g} "
              f"margin={c.margin:.6g}")
        if c.name == "rate_constant":
            figures.save_rate_figure(c.details["gaps"], c.rhs,
                                     os.path.join(out_dir, "verify_rate.png"))
    return 0 if all(c.passed for c in checks) else 4


def cmd_export(out_dir, policy_path):
    solution, model_info, seeds = load_policy(policy_path)
    policy = solution.policy
    table = solution.tables[-1]
    with open(os.path.join(out_dir, "value_table.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "value", "h", "greedy_action",
                         "mean_norm", "second_moment"])
        for k, rep in enumerate(policy.cover.representatives):
            mean, m2 = moments(rep)
            writer.writerow([k, repr(float(table.values[k])),
                             repr(float(solution.h[k])),
                             int(policy.action_map[k]),
                             repr(float(np.linalg.norm(mean))), repr(m2)])
    with open(os.path.join(out_dir, "rho_trend.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "rho_estimate"])
        for b, r in zip(solution.beta_schedule, solution.rho_trend):
            writer.writerow([repr(float(b)), repr(float(r))])
    with open(os.path.join(out_dir, "actions.json"), "w") as fh:
        json.dump([{"M": q.M, "sites": q.sites.ravel().tolist(),
                    "weights": q.weights.tolist()}
                   for q in policy.actions], fh, indent=1)
    figures.save_rho_trend_figure(solution.beta_schedule, solution.rho_trend,
                                  os.path.join(out_dir, "rho_trend.png"))
    figures.save_cover_figure(solution, os.path.join(out_dir, "cover.png"))
    print(f"exported policy (model hash {model_info['hash'][:12]}..., "
          f"cover {policy.cover.size}, seeds {seeds}) to {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zdq",
        description="zero-delay quantizer policy design and verification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "design", "evaluate", "verify", "export"):
        p = sub.add_parser(name)
        if name != "export":
            p.add_argument("--config", required=True)
        p.add_argument("--policy",
                       required=name in ("evaluate", "verify", "export"))
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--strict", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if getattr(args, "config", None):
            cfg = load_config(args.config)
            if args.seed is not None:
                from dataclasses import replace
                cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
            if args.threads is not None:
                from dataclasses import replace
                cfg = replace(cfg, run=replace(cfg.run, threads=args.threads))
        threads = (args.threads if args.threads is not None
                   else int(os.environ.get("ZDQ_THREADS",
                                           cfg.run.threads if cfg else 1)))
        out_dir = _ensure_out(args.out if args.out is not None
                              else (cfg.run.out_dir if cfg else "out"))
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "design":
            return cmd_design(cfg, out_dir, args.policy, args.strict)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out_dir, args.policy)
        if args.command == "verify":
            code = cmd_verify(cfg, out_dir, args.policy, threads)
            if code != 0:
                print("verification FAILED", file=sys.stderr)
            return code
        if args.command == "export":
            return cmd_export(out_dir, args.policy)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, ModelMismatch, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ZdqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
