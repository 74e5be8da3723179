"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`.  The reference designs are
session fixtures (see conftest), so criteria 5-8 share them.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from zdq import (Belief, ConvexQuantizer, InitialDistribution, acoe_residual,
                 bellman_backup, check_equicontinuity, check_rate,
                 evaluate_policy, optimal_decoder, second_moment_bound,
                 simulate_batch, simulate_coupled, stage_cost,
                 value_iteration, vanishing_discount, wasserstein2)
from zdq.planner import FrozenKernel
from zdq.policy_io import load_policy, save_policy


def report(num, name, t0, extra=""):
    note = f" [{extra}]" if extra else ""
    print(f"\nACCEPTANCE {num} ({name}): PASS in {time.time() - t0:.1f}s{note}")


# --------------------------------------------------------------- criterion 1

def w2_permutation_oracle(p1, p2):
    best = np.inf
    for perm in itertools.permutations(range(len(p1))):
        cost = np.mean([np.sum((p1[i] - p2[j]) ** 2)
                        for i, j in enumerate(perm)])
        best = min(best, cost)
    return np.sqrt(best)


def test_acceptance_1_ot_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(1001)
    worst = 0.0
    for k in range(200):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 5))
        p1 = rng.standard_normal((n, d)) * 2.0
        p2 = rng.standard_normal((n, d)) * 2.0
        got = wasserstein2(Belief.equal(p1), Belief.equal(p2))
        worst = max(worst, abs(got - w2_permutation_oracle(p1, p2)))
    assert worst <= 1e-9
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report(1, "OT oracle equivalence", t0, f"max err {worst:.2e}")


# --------------------------------------------------------------- criterion 2

def cost_with_codebook(belief, q, points):
    members = q.encode_batch(belief.particles)
    diff = belief.particles - points[members]
    return float(belief.weights @ np.sum(diff ** 2, axis=1))


def golden_section_oracle(belief, q):
    members = q.encode_batch(belief.particles)
    total = 0.0
    for i in range(q.M):
        mask = members == i
        w = belief.weights[mask]
        if w.sum() == 0:
            continue
        pts = belief.particles[mask]
        for j in range(belief.dim):
            res = minimize_scalar(
                lambda u: float(w @ (pts[:, j] - u) ** 2),
                bounds=(pts[:, j].min() - 1.0, pts[:, j].max() + 1.0),
                method="bounded", options={"xatol": 1e-10})
            total += res.fun
    return total


def test_acceptance_2_stage_cost_decoder_oracle():
    t0 = time.time()
    rng = np.random.default_rng(1002)
    worst = 0.0
    for k in range(500):
        d = int(rng.integers(1, 3))
        n = int(rng.integers(2, 33))
        m = int(rng.integers(1, 5))
        w = rng.random(n)
        b = Belief(rng.standard_normal((n, d)) * 1.5, w / w.sum())
        q = ConvexQuantizer(rng.standard_normal((m, d)),
                            rng.standard_normal(m) * 0.3)
        got = stage_cost(b, q)
        worst = max(worst, abs(got - golden_section_oracle(b, q)))
        base_cb = optimal_decoder(b, q).points
        base = cost_with_codebook(b, q, base_cb)
        masses = np.zeros(m)
        np.add.at(masses, q.encode_batch(b.particles), b.weights)
        for scale in (1e-2, 1e-1, 1.0):
            i = int(rng.integers(m))
            delta = rng.standard_normal(d)
            delta *= scale / np.linalg.norm(delta)
            cb = base_cb.copy()
            cb[i] = cb[i] + delta
            perturbed = cost_with_codebook(b, q, cb)
            assert perturbed >= base - 1e-12
            if masses[i] > 0:
                assert perturbed > base
    assert worst <= 1e-6
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report(2, "stage-cost/decoder oracle", t0, f"max err {worst:.2e}")


# --------------------------------------------------------------- criterion 3

def two_state_kernel(costs, transitions):
    probs = np.array(transitions)
    succ = np.tile(np.array([0, 1]), (2, 2, 1))
    return FrozenKernel(np.array(costs, dtype=float), probs, succ)


TOY = two_state_kernel(
    costs=[[1.0, 1.2], [1.0, 2.0]],
    transitions=[[[0.3, 0.7], [0.9, 0.1]],
                 [[0.6, 0.4], [0.2, 0.8]]])


def inv2(m):
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def test_acceptance_3_toy_mdp_exactness():
    t0 = time.time()
    for beta in (0.5, 0.9, 0.99):
        values = []
        for a0 in range(2):
            for a1 in range(2):
                p = np.stack([TOY.probs[0, a0], TOY.probs[1, a1]])
                c = np.array([TOY.stage_costs[0, a0], TOY.stage_costs[1, a1]])
                values.append(inv2(np.eye(2) - beta * p) @ c)
        oracle = np.array(values).min(axis=0)
        table = value_iteration(TOY, beta, tol=1e-8)
        assert np.max(np.abs(table.values - oracle)) <= 1e-8
    rhos = []
    for a0 in range(2):
        for a1 in range(2):
            p = np.stack([TOY.probs[0, a0], TOY.probs[1, a1]])
            c = np.array([TOY.stage_costs[0, a0], TOY.stage_costs[1, a1]])
            mu0 = p[1, 0] / (p[0, 1] + p[1, 0])
            rhos.append(mu0 * c[0] + (1 - mu0) * c[1])
    rho, h, tables, trend = vanishing_discount(TOY, (0.9, 0.99, 0.999),
                                               tol=1e-6)
    assert abs(rho - min(rhos)) <= 1e-6
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report(3, "toy-MDP exactness", t0, f"rho*={rho:.9f}")


# --------------------------------------------------------------- criterion 4

def test_acceptance_4_vi_structure():
    t0 = time.time()
    rng = np.random.default_rng(1004)
    for k in range(50):
        K = int(rng.integers(2, 10))
        A = int(rng.integers(1, 5))
        M = int(rng.integers(1, 5))
        costs = rng.random((K, A)) * 4.0
        probs = rng.random((K, A, M))
        probs /= probs.sum(axis=2, keepdims=True)
        succ = rng.integers(0, K, size=(K, A, M))
        kernel = FrozenKernel(costs, probs, succ)
        beta = float(rng.uniform(0.2, 0.99))
        v = np.zeros(K)
        for _ in range(30):
            v_next, _ = bellman_backup(v, kernel, beta)
            assert np.all(v_next >= v)       # monotone from v0 = 0
            v = v_next
        a = rng.random(K) * 10
        b = rng.random(K) * 10
        ha, _ = bellman_backup(a, kernel, beta)
        hb, _ = bellman_backup(b, kernel, beta)
        assert np.max(np.abs(ha - hb)) <= beta * np.max(np.abs(a - b)) + 1e-12
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report(4, "VI monotonicity and contraction", t0)


# --------------------------------------------------------------- criterion 5

def test_acceptance_5_lemma6_bound(ref_d1_design):
    t0 = time.time()
    cfg, model, init, solution, kernel = ref_d1_design
    table = solution.tables[0]
    assert table.beta == 0.9
    cap_value = (1.0 + 1.0 / 0.75) / (1.0 - 0.9)
    assert cap_value == pytest.approx(23.3333333, abs=1e-6)
    assert np.max(table.values) <= cap_value
    cap_moment = second_moment_bound(model, 1.0, None)
    assert cap_moment == pytest.approx(7 / 3, abs=1e-12)
    n = 100_000
    paths = simulate_batch(model, init, 64, n, 10_005)
    sq = np.sum(paths ** 2, axis=2)
    mean = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(mean <= cap_moment + 3 * se)
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(5, "Lemma-6 caps", t0,
           f"max value {np.max(table.values):.3f} <= {cap_value:.3f}")


# --------------------------------------------------------------- criterion 6

def test_acceptance_6_coupling_and_equicontinuity(ref_d1_design):
    t0 = time.time()
    cfg, model, init, solution, kernel = ref_d1_design
    pair = simulate_coupled(model, [0.0], [1.0], 12, 10_006)
    gaps = np.abs(pair.y_path - pair.x_path).ravel()
    expect = 0.5 ** np.arange(13)
    assert np.max(np.abs(gaps - expect) / expect) <= 1e-9
    nu0 = InitialDistribution.point_mass([0.0])
    for beta, t_trunc in ((0.9, 88), (0.99, 920)):
        bc = check_equicontinuity(model, nu0, init, beta, solution.policy,
                                  n_traj=2048, T_trunc=t_trunc, seed=10_106)
        assert bc.rhs == pytest.approx(7.443434259941119, abs=1e-9)
        assert bc.passed
        assert bc.details["coupling_max_ratio"] <= 1.0 + 1e-9
    elapsed = time.time() - t0
    assert elapsed < 120.0
    report(6, "Lemma-7 coupling and equicontinuity", t0)


# --------------------------------------------------------------- criterion 7

def test_acceptance_7_rate_bound(ref_d1_design):
    t0 = time.time()
    cfg, model, init, solution, kernel = ref_d1_design
    bc, slope = check_rate(model, solution.policy, init,
                           [8, 16, 32, 64, 128, 256], n_traj=10_000,
                           seed=10_007)
    assert bc.rhs == pytest.approx(24.665101643821195, abs=1e-9)
    assert bc.passed
    assert slope.lhs <= -0.8
    elapsed = time.time() - t0
    assert elapsed < 600.0
    report(7, "finite-horizon rate", t0,
           f"max T*gap {bc.lhs:.3f} <= {bc.rhs:.2f}, slope {slope.lhs:.2f}")


# --------------------------------------------------------------- criterion 8

def test_acceptance_8_acoe_residual(ref_d1_design, ref_d2_design):
    t0 = time.time()
    for label, fixture in (("d1", ref_d1_design), ("d2", ref_d2_design)):
        cfg, model, init, solution, kernel = fixture
        assert solution.beta_schedule[-1] == 0.9999
        assert solution.converged
        residual = acoe_residual(solution.rho_star, solution.h, kernel)
        assert residual == solution.acoe_residual
        assert residual <= 0.05 * solution.rho_star, label
    elapsed = time.time() - t0
    assert elapsed < 600.0
    report(8, "ACOE residual", t0)


# --------------------------------------------------------------- criterion 9

def test_acceptance_9_reproducibility(small_d1_design, tmp_path):
    t0 = time.time()
    cfg, model, init, solution, kernel = small_d1_design
    from zdq.cli import _design
    model2, init2, solution2, kernel2 = _design(cfg)
    p1, p2 = tmp_path / "p1.zdq", tmp_path / "p2.zdq"
    save_policy(p1, solution, model, seeds={"design": cfg.run.seed})
    save_policy(p2, solution2, model2, seeds={"design": cfg.run.seed})
    assert p1.read_bytes() == p2.read_bytes()
    loaded, _, _ = load_policy(p1)
    r1 = evaluate_policy(model, solution.policy, init, 16, 128, seed=10_009,
                         beta=0.9)
    r2 = evaluate_policy(model, loaded.policy, init, 16, 128, seed=10_009,
                         beta=0.9)
    assert np.array_equal(r1.per_step_mean, r2.per_step_mean)
    assert np.array_equal(r1.running_avg, r2.running_avg)
    assert r1.discounted_total == r2.discounted_total
    elapsed = time.time() - t0
    assert elapsed < 120.0
    report(9, "reproducibility and persistence", t0)
