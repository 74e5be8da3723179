import os

import numpy as np
import pytest

from zdq import InitialDistribution, NoiseModel, SourceModel
from zdq.cli import _design
from zdq.config import load_config

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")

SMALL_D1_TOML = """
[model]
dim = 1
A = [0.5]
[model.noise]
cov = [1.0]
[model.init]
point = [1.0]

[actions]
M = 2
n_actions = 4
lloyd_iters = 30

[cover]
radius = 0.3
n_rollouts = 8
T = 16
cap = 64
n_particles = 48

[solver]
beta_schedule = [0.8, 0.9]
tol = 1e-6
max_iter = 20000

[evaluation]
T_grid = [4, 8]
n_traj = 200
beta = 0.9

[run]
seed = 7
out_dir = "out"
"""


@pytest.fixture
def d1_model():
    return SourceModel(np.array([[0.5]]), NoiseModel(np.array([[1.0]])))


@pytest.fixture
def d1_init():
    return InitialDistribution.point_mass([1.0])


@pytest.fixture(scope="session")
def ref_d1_design():
    cfg = load_config(os.path.join(CONFIG_DIR, "ref_d1.toml"))
    model, init, solution, kernel = _design(cfg)
    return cfg, model, init, solution, kernel


@pytest.fixture(scope="session")
def ref_d2_design():
    cfg = load_config(os.path.join(CONFIG_DIR, "ref_d2.toml"))
    model, init, solution, kernel = _design(cfg)
    return cfg, model, init, solution, kernel


@pytest.fixture(scope="session")
def small_d1_design(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small_d1.toml"
    path.write_text(SMALL_D1_TOML)
    cfg = load_config(path)
    model, init, solution, kernel = _design(cfg)
    return cfg, model, init, solution, kernel


@pytest.fixture(scope="session")
def small_d1_toml(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfgfile") / "small_d1.toml"
    path.write_text(SMALL_D1_TOML)
    return str(path)
