"""Experiment configuration: TOML in, validated dataclasses out.

The schema (all keys) is documented in the README.  Configurations
round-trip bit-exactly through to_toml_str / parse.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

import numpy as np

from .belief import load_particles_csv
from .errors import ConfigError
from .source import InitialDistribution, NoiseModel, SourceModel


@dataclass(frozen=True)
class ModelConfig:
    dim: int
    A: tuple                 # row-major, dim*dim entries
    noise_cov: tuple         # row-major, dim*dim entries
    init_point: tuple | None = None
    init_particles_file: str | None = None


@dataclass(frozen=True)
class ActionConfig:
    M: int = 2
    n_actions: int = 6
    lloyd_iters: int = 50


@dataclass(frozen=True)
class CoverConfig:
    radius: float = 0.25
    n_rollouts: int = 24
    T: int = 32
    cap: int = 512
    n_particles: int = 64
    mass_floor: float = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    beta_schedule: tuple = (0.9, 0.99, 0.999, 0.9999)
    tol: float = 1e-6
    max_iter: int = 600_000
    mu_ref_index: int = 0


@dataclass(frozen=True)
class EvalConfig:
    T_grid: tuple = (8, 16, 32, 64, 128, 256)
    n_traj: int = 10_000
    beta: float | None = None
    sim_T: int | None = None         # simulate-subcommand horizon override


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    threads: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    actions: ActionConfig = field(default_factory=ActionConfig)
    cover: CoverConfig = field(default_factory=CoverConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_toml_str(self):
        return _emit_toml(self)


def _req(table, key, section):
    if key not in table:
        raise ConfigError(f"[{section}] missing required key '{key}'")
    return table[key]


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_config(data):
    """Build an ExperimentConfig from a parsed TOML mapping."""
    if "model" not in data:
        raise ConfigError("missing [model] section")
    m = data["model"]
    dim = int(_req(m, "dim", "model"))
    _check(dim >= 1, "[model] dim must be >= 1")
    a = tuple(float(v) for v in _req(m, "A", "model"))
    _check(len(a) == dim * dim,
           f"[model] A needs {dim * dim} row-major entries, got {len(a)}")
    noise = m.get("noise", {})
    cov = tuple(float(v) for v in _req(noise, "cov", "model.noise"))
    _check(len(cov) == dim * dim,
           f"[model.noise] cov needs {dim * dim} entries, got {len(cov)}")
    init = m.get("init", {})
    point = init.get("point")
    pfile = init.get("particles_file")
    _check((point is None) != (pfile is None),
           "[model.init] needs exactly one of point / particles_file")
    if point is not None:
        point = tuple(float(v) for v in point)
        _check(len(point) == dim, "[model.init] point has wrong dimension")
    model_cfg = ModelConfig(dim, a, cov, point, pfile)

    act = data.get("actions", {})
    actions_cfg = ActionConfig(
        M=int(act.get("M", 2)),
        n_actions=int(act.get("n_actions", 6)),
        lloyd_iters=int(act.get("lloyd_iters", 50)))
    _check(actions_cfg.M >= 1, "[actions] M must be >= 1")
    _check(actions_cfg.n_actions >= 1, "[actions] n_actions must be >= 1")
    _check(actions_cfg.lloyd_iters >= 0, "[actions] lloyd_iters must be >= 0")

    cov_t = data.get("cover", {})
    cover_cfg = CoverConfig(
        radius=float(cov_t.get("radius", 0.25)),
        n_rollouts=int(cov_t.get("n_rollouts", 24)),
        T=int(cov_t.get("T", 32)),
        cap=int(cov_t.get("cap", 512)),
        n_particles=int(cov_t.get("n_particles", 64)),
        mass_floor=float(cov_t.get("mass_floor", 1e-9)))
    _check(cover_cfg.radius > 0, "[cover] radius must be positive")
    _check(cover_cfg.n_rollouts >= 0, "[cover] n_rollouts must be >= 0")
    _check(cover_cfg.T >= 1, "[cover] T must be >= 1")
    _check(cover_cfg.cap >= 1, "[cover] cap must be >= 1")
    _check(cover_cfg.n_particles >= 2, "[cover] n_particles must be >= 2")
    _check(0 < cover_cfg.mass_floor < 1e-2,
           "[cover] mass_floor must be in (0, 0.01)")

    sol = data.get("solver", {})
    schedule = tuple(float(b) for b in
                     sol.get("beta_schedule", (0.9, 0.99, 0.999, 0.9999)))
    _check(all(0 < b < 1 for b in schedule),
           "[solver] beta_schedule entries must be in (0, 1)")
    _check(all(b2 > b1 for b1, b2 in zip(schedule, schedule[1:])),
           "[solver] beta_schedule must be strictly increasing")
    solver_cfg = SolverConfig(
        beta_schedule=schedule,
        tol=float(sol.get("tol", 1e-6)),
        max_iter=int(sol.get("max_iter", 600_000)),
        mu_ref_index=int(sol.get("mu_ref_index", 0)))
    _check(solver_cfg.tol > 0, "[solver] tol must be positive")
    _check(solver_cfg.max_iter >= 1, "[solver] max_iter must be >= 1")

    ev = data.get("evaluation", {})
    t_grid = tuple(int(t) for t in ev.get("T_grid", (8, 16, 32, 64, 128, 256)))
    _check(len(t_grid) >= 1, "[evaluation] T_grid must be nonempty")
    _check(all(t >= 1 for t in t_grid), "[evaluation] T_grid entries >= 1")
    _check(all(b > a for a, b in zip(t_grid, t_grid[1:])),
           "[evaluation] T_grid must be strictly increasing")
    beta = ev.get("beta")
    if beta is not None:
        beta = float(beta)
        _check(0 < beta < 1, "[evaluation] beta must be in (0, 1)")
    sim_t = ev.get("sim_T")
    if sim_t is not None:
        sim_t = int(sim_t)
        _check(sim_t >= 0, "[evaluation] sim_T must be >= 0")
    eval_cfg = EvalConfig(T_grid=t_grid, n_traj=int(ev.get("n_traj", 10_000)),
                          beta=beta, sim_T=sim_t)
    _check(eval_cfg.n_traj >= 1, "[evaluation] n_traj must be >= 1")

    run = data.get("run", {})
    run_cfg = RunConfig(seed=int(run.get("seed", 0)),
                        out_dir=str(run.get("out_dir", "out")),
                        threads=int(run.get("threads", 1)))
    _check(run_cfg.seed >= 0, "[run] seed must be >= 0")
    _check(run_cfg.threads >= 1, "[run] threads must be >= 1")

    return ExperimentConfig(model_cfg, actions_cfg, cover_cfg, solver_cfg,
                            eval_cfg, run_cfg)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v)}")


def _emit_toml(cfg):
    """Minimal TOML emitter covering the config schema (round-trip exact)."""
    lines = ["[model]", f"dim = {cfg.model.dim}", f"A = {_fmt(cfg.model.A)}",
             "", "[model.noise]", f"cov = {_fmt(cfg.model.noise_cov)}",
             "", "[model.init]"]
    if cfg.model.init_point is not None:
        lines.append(f"point = {_fmt(cfg.model.init_point)}")
    else:
        lines.append(f"particles_file = {_fmt(cfg.model.init_particles_file)}")
    lines += ["", "[actions]",
              f"M = {cfg.actions.M}",
              f"n_actions = {cfg.actions.n_actions}",
              f"lloyd_iters = {cfg.actions.lloyd_iters}",
              "", "[cover]",
              f"radius = {_fmt(cfg.cover.radius)}",
              f"n_rollouts = {cfg.cover.n_rollouts}",
              f"T = {cfg.cover.T}",
              f"cap = {cfg.cover.cap}",
              f"n_particles = {cfg.cover.n_particles}",
              f"mass_floor = {_fmt(cfg.cover.mass_floor)}",
              "", "[solver]",
              f"beta_schedule = {_fmt(cfg.solver.beta_schedule)}",
              f"tol = {_fmt(cfg.solver.tol)}",
              f"max_iter = {cfg.solver.max_iter}",
              f"mu_ref_index = {cfg.solver.mu_ref_index}",
              "", "[evaluation]",
              f"T_grid = {_fmt(cfg.evaluation.T_grid)}",
              f"n_traj = {cfg.evaluation.n_traj}"]
    if cfg.evaluation.beta is not None:
        lines.append(f"beta = {_fmt(cfg.evaluation.beta)}")
    if cfg.evaluation.sim_T is not None:
        lines.append(f"sim_T = {cfg.evaluation.sim_T}")
    lines += ["", "[run]",
              f"seed = {cfg.run.seed}",
              f"out_dir = {_fmt(cfg.run.out_dir)}",
              f"threads = {cfg.run.threads}",
              ""]
    return "\n".join(lines)


def build_model(cfg):
    d = cfg.model.dim
    A = np.array(cfg.model.A, dtype=float).reshape(d, d)
    cov = np.array(cfg.model.noise_cov, dtype=float).reshape(d, d)
    return SourceModel(A, NoiseModel(cov))


def build_init(cfg, base_dir="."):
    if cfg.model.init_point is not None:
        return InitialDistribution.point_mass(cfg.model.init_point)
    path = cfg.model.init_particles_file
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    return InitialDistribution.from_belief(load_particles_csv(path))
