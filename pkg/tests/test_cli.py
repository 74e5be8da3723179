from zdq.cli import main
from zdq.verify import BoundCheck


def run_cli(*args):
    return main([str(a) for a in args])


def test_simulate_writes_csv_and_figure(small_d1_toml, tmp_path):
    out = tmp_path / "sim"
    assert run_cli("simulate", "--config", small_d1_toml, "--out", out) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x1"
    assert len(lines) == 1 + 8 + 1  # header + T+1 rows at T_grid max 8
    assert (out / "simulate_trajectories.png").exists()


def test_simulate_deterministic_across_runs(small_d1_toml, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_cli("simulate", "--config", small_d1_toml, "--out", out1)
    run_cli("simulate", "--config", small_d1_toml, "--out", out2)
    assert (out1 / "trajectory.csv").read_bytes() == \
        (out2 / "trajectory.csv").read_bytes()
    out3 = tmp_path / "c"
    run_cli("simulate", "--config", small_d1_toml, "--out", out3, "--seed", 99)
    assert (out1 / "trajectory.csv").read_bytes() != \
        (out3 / "trajectory.csv").read_bytes()


def test_simulate_horizon_zero(small_d1_toml, tmp_path):
    cfg_text = open(small_d1_toml).read().replace(
        "n_traj = 200", "n_traj = 200\nsim_T = 0")
    cfg_path = tmp_path / "t0.toml"
    cfg_path.write_text(cfg_text)
    out = tmp_path / "sim0"
    assert run_cli("simulate", "--config", cfg_path, "--out", out) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 2  # header + one row


def test_design_outputs_and_byte_identical_policies(small_d1_toml, tmp_path):
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    p1, p2 = tmp_path / "p1.zdq", tmp_path / "p2.zdq"
    assert run_cli("design", "--config", small_d1_toml, "--out", out1,
                   "--policy", p1) == 0
    assert run_cli("design", "--config", small_d1_toml, "--out", out2,
                   "--policy", p2) == 0
    assert p1.read_bytes() == p2.read_bytes()
    assert (out1 / "design_report.json").exists()
    assert (out1 / "rho_trend.csv").exists()
    assert (out1 / "design_rho_trend.png").exists()
    assert (out1 / "design_cover.png").exists()
    assert (out1 / "design_report.json").read_bytes() == \
        (out2 / "design_report.json").read_bytes()


def test_design_strict_flags_nonconvergence(small_d1_toml, tmp_path):
    cfg_text = open(small_d1_toml).read().replace("max_iter = 20000",
                                                  "max_iter = 2")
    cfg_path = tmp_path / "stuck.toml"
    cfg_path.write_text(cfg_text)
    out = tmp_path / "out"
    assert run_cli("design", "--config", cfg_path, "--out", out,
                   "--policy", tmp_path / "p.zdq") == 0
    assert run_cli("design", "--config", cfg_path, "--out", out,
                   "--policy", tmp_path / "p2.zdq", "--strict") == 3


def test_evaluate_matches_design_time_numbers(small_d1_toml, tmp_path):
    policy = tmp_path / "p.zdq"
    run_cli("design", "--config", small_d1_toml, "--out", tmp_path / "d",
            "--policy", policy)
    out1, out2 = tmp_path / "e1", tmp_path / "e2"
    assert run_cli("evaluate", "--config", small_d1_toml, "--policy", policy,
                   "--out", out1) == 0
    assert run_cli("evaluate", "--config", small_d1_toml, "--policy", policy,
                   "--out", out2) == 0
    assert (out1 / "cost_report.csv").read_bytes() == \
        (out2 / "cost_report.csv").read_bytes()
    assert (out1 / "grid_costs.csv").exists()
    assert (out1 / "evaluate_cost.png").exists()


def test_evaluate_point_mass_first_cost_zero(small_d1_toml, tmp_path):
    cfg_text = open(small_d1_toml).read().replace("T_grid = [4, 8]",
                                                  "T_grid = [1]")
    cfg_path = tmp_path / "t1.toml"
    cfg_path.write_text(cfg_text)
    policy = tmp_path / "p.zdq"
    run_cli("design", "--config", cfg_path, "--out", tmp_path / "d",
            "--policy", policy)
    out = tmp_path / "e"
    assert run_cli("evaluate", "--config", cfg_path, "--policy", policy,
                   "--out", out) == 0
    lines = (out / "cost_report.csv").read_text().splitlines()
    assert lines[1].split(",")[1] == "0.0"


def test_evaluate_model_mismatch_exits_2(small_d1_toml, tmp_path):
    policy = tmp_path / "p.zdq"
    run_cli("design", "--config", small_d1_toml, "--out", tmp_path / "d",
            "--policy", policy)
    cfg_text = open(small_d1_toml).read().replace("A = [0.5]", "A = [0.4]")
    cfg_path = tmp_path / "other.toml"
    cfg_path.write_text(cfg_text)
    assert run_cli("evaluate", "--config", cfg_path, "--policy", policy,
                   "--out", tmp_path / "e") == 2


def test_config_errors_exit_2(small_d1_toml, tmp_path):
    assert run_cli("simulate", "--config", tmp_path / "nope.toml",
                   "--out", tmp_path) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text(open(small_d1_toml).read().replace("T_grid = [4, 8]",
                                                      "T_grid = []"))
    assert run_cli("simulate", "--config", bad, "--out", tmp_path) == 2


def test_verify_suite_passes_and_writes_outputs(small_d1_toml, tmp_path):
    policy = tmp_path / "p.zdq"
    run_cli("design", "--config", small_d1_toml, "--out", tmp_path / "d",
            "--policy", policy)
    out = tmp_path / "v"
    assert run_cli("verify", "--config", small_d1_toml, "--policy", policy,
                   "--out", out) == 0
    lines = (out / "bound_checks.csv").read_text().splitlines()
    assert lines[0] == "name,lhs,stderr,rhs,margin,pass"
    assert len(lines) > 5
    assert all(ln.endswith(",1") for ln in lines[1:])
    assert (out / "verify_margins.png").exists()
    assert (out / "verify_rate.png").exists()


def test_verify_failure_exits_4(small_d1_toml, tmp_path, monkeypatch):
    import zdq.cli as cli_mod
    policy = tmp_path / "p.zdq"
    run_cli("design", "--config", small_d1_toml, "--out", tmp_path / "d",
            "--policy", policy)
    monkeypatch.setattr(
        cli_mod, "check_second_moment",
        lambda *a, **k: BoundCheck("second_moment", 10.0, 0.0, 1.0))
    assert run_cli("verify", "--config", small_d1_toml, "--policy", policy,
                   "--out", tmp_path / "v") == 4


def test_verify_threads_env(small_d1_toml, tmp_path, monkeypatch):
    policy = tmp_path / "p.zdq"
    run_cli("design", "--config", small_d1_toml, "--out", tmp_path / "d",
            "--policy", policy)
    monkeypatch.setenv("ZDQ_THREADS", "2")
    out1 = tmp_path / "v1"
    assert run_cli("verify", "--config", small_d1_toml, "--policy", policy,
                   "--out", out1) == 0
    monkeypatch.delenv("ZDQ_THREADS")
    out2 = tmp_path / "v2"
    assert run_cli("verify", "--config", small_d1_toml, "--policy", policy,
                   "--out", out2) == 0
    assert (out1 / "bound_checks.csv").read_bytes() == \
        (out2 / "bound_checks.csv").read_bytes()


def test_export_writes_artifacts(small_d1_toml, tmp_path):
    policy = tmp_path / "p.zdq"
    run_cli("design", "--config", small_d1_toml, "--out", tmp_path / "d",
            "--policy", policy)
    out = tmp_path / "x"
    assert run_cli("export", "--policy", policy, "--out", out) == 0
    for name in ("value_table.csv", "rho_trend.csv", "actions.json",
                 "rho_trend.png", "cover.png"):
        assert (out / name).exists()
    lines = (out / "value_table.csv").read_text().splitlines()
    assert lines[0].startswith("rep,value,h,greedy_action")
