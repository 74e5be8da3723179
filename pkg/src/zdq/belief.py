"""Particle beliefs: the conditional law of the source given past symbols.

A belief is a weighted point cloud with finite second moment.  The filtering
step conditions on the transmitted cell and pushes the surviving particles
through the source dynamics, returning a fresh equally weighted cloud.
Distances between beliefs use the order-2 Wasserstein metric, computed
exactly up to a support budget.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .errors import BudgetExceeded, ImpossibleSymbol, NonFinite

MASS_FLOOR = 1e-9
OT_BUDGET = 512
_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Belief:
    """Weighted particles (N, d) approximating a probability measure."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.particles, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
            raise NonFinite("belief contains non-finite entries")
        if np.any(w < 0):
            raise ValueError("belief weights must be nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"belief weights sum to {w.sum()!r}, expected 1")
        if len(w) != p.shape[0]:
            raise ValueError("particle/weight length mismatch")
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]

    @classmethod
    def point_mass(cls, x, n=1):
        """Point mass at x, represented by n identical particles."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(np.tile(x, (n, 1)), np.full(n, 1.0 / n))

    @classmethod
    def equal(cls, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    def is_equal_weight(self):
        return bool(np.all(self.weights == 1.0 / self.size))


def moments(belief):
    """Weighted mean vector and weighted second moment E||X||^2."""
    mean = belief.weights @ belief.particles
    m2 = float(belief.weights @ np.sum(belief.particles ** 2, axis=1))
    return mean, m2


def symbol_probs(belief, q):
    """Belief mass of every quantizer cell; entries sum to 1."""
    members = q.encode_batch(belief.particles)
    probs = np.zeros(q.M)
    np.add.at(probs, members, belief.weights)
    return probs


def filter_update(belief, model, q, symbol, n_out, rng, mass_floor=MASS_FLOOR):
    """One filtering step: condition on the cell, push through the dynamics.

    Returns n_out equally weighted particles drawn from the mixture over the
    particles x_j inside the received cell of Normal(A x_j, noise covariance).

    Raises ImpossibleSymbol when the cell mass is below mass_floor.
    """
    members = q.encode_batch(belief.particles)
    mask = members == symbol
    mass = float(belief.weights[mask].sum())
    if mass < mass_floor:
        raise ImpossibleSymbol(
            f"cell {symbol} has belief mass {mass:.3e} < {mass_floor:.1e}")
    idx = np.flatnonzero(mask)
    ancestors = rng.choice(idx, size=n_out, p=belief.weights[mask] / mass)
    nxt = belief.particles[ancestors] @ model.A.T + model.noise.sample(rng, n_out)
    return Belief.equal(nxt)


def _transport_lp(b1, b2, cost):
    """Exact transportation LP between two weighted discrete measures."""
    n1, n2 = cost.shape
    a_rows = []
    for i in range(n1):
        row = np.zeros_like(cost)
        row[i, :] = 1.0
        a_rows.append(row.ravel())
    for j in range(n2):
        col = np.zeros_like(cost)
        col[:, j] = 1.0
        a_rows.append(col.ravel())
    a_eq = np.array(a_rows)[:-1]          # drop one redundant constraint
    b_eq = np.concatenate([b1.weights, b2.weights])[:-1]
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return res.x.reshape(n1, n2)


def transport_plan(b1, b2, max_support=OT_BUDGET):
    """Optimal coupling matrix (n1, n2) for squared-Euclidean ground cost."""
    if b1.size > max_support or b2.size > max_support:
        raise BudgetExceeded(
            f"supports {b1.size}x{b2.size} exceed exact-OT budget {max_support}")
    diff = b1.particles[:, None, :] - b2.particles[None, :, :]
    cost = np.sum(diff ** 2, axis=2)
    if b1.size == b2.size and b1.is_equal_weight() and b2.is_equal_weight():
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros_like(cost)
        plan[rows, cols] = 1.0 / b1.size
        return plan
    return _transport_lp(b1, b2, cost)


def wasserstein2(b1, b2, max_support=OT_BUDGET):
    """Exact order-2 Wasserstein distance between two particle beliefs.

    Equal-weight supports of equal size reduce to an assignment problem
    (in one dimension, to sorting); anything else solves the transportation
    LP.  Raises BudgetExceeded above max_support; callers must downsample or
    use sliced_wasserstein2, which is approximate and labeled as such.
    """
    if b1.size > max_support or b2.size > max_support:
        raise BudgetExceeded(
            f"supports {b1.size}x{b2.size} exceed exact-OT budget {max_support}")
    if b1.size == b2.size and b1.is_equal_weight() and b2.is_equal_weight():
        if b1.dim == 1:
            s1 = np.sort(b1.particles[:, 0])
            s2 = np.sort(b2.particles[:, 0])
            return float(np.sqrt(np.mean((s1 - s2) ** 2)))
        diff = b1.particles[:, None, :] - b2.particles[None, :, :]
        cost = np.sum(diff ** 2, axis=2)
        rows, cols = linear_sum_assignment(cost)
        return float(np.sqrt(cost[rows, cols].mean()))
    diff = b1.particles[:, None, :] - b2.particles[None, :, :]
    cost = np.sum(diff ** 2, axis=2)
    plan = _transport_lp(b1, b2, cost)
    return float(np.sqrt(max(np.sum(plan * cost), 0.0)))


def sliced_wasserstein2(b1, b2, n_projections=128, seed=0):
    """Sliced approximation of wasserstein2 (labeled approximate; no budget)."""
    from .rng import substream
    rng = substream(seed, 91)
    d = b1.dim
    total = 0.0
    for _ in range(n_projections):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        p1 = Belief(b1.particles @ u[:, None], b1.weights)
        p2 = Belief(b2.particles @ u[:, None], b2.weights)
        total += wasserstein2(p1, p2, max_support=10 ** 9) ** 2
    return float(np.sqrt(total / n_projections))


def nearest_representative(belief, representatives, return_distance=False):
    """Index of the ρ2-nearest representative, with mean/moment pruning.

    Both ||mean difference|| and |sqrt(m) - sqrt(m')| lower-bound ρ2, so
    exact distances are only computed while a candidate's lower bound beats
    the current best.
    """
    mean_b, m2_b = moments(belief)
    lbs = np.empty(len(representatives))
    for j, rep in enumerate(representatives):
        mean_r, m2_r = moments(rep)
        lbs[j] = max(np.linalg.norm(mean_b - mean_r),
                     abs(np.sqrt(m2_b) - np.sqrt(m2_r)))
    order = np.argsort(lbs, kind="stable")
    best_j, best_d = -1, np.inf
    for j in order:
        if lbs[j] >= best_d:
            break
        d = wasserstein2(belief, representatives[j])
        if d < best_d or (d == best_d and j < best_j):
            best_j, best_d = int(j), d
    if return_distance:
        return best_j, best_d
    return best_j


@dataclass(frozen=True)
class CoupledPair:
    """Two trajectories driven by identical noise draws."""

    x_path: np.ndarray
    y_path: np.ndarray
    seed: int


def simulate_coupled(model, x0, y0, T, seed):
    """Run two copies of the source from x0 and y0 with shared noise.

    The gap satisfies y_t - x_t = A^t (y0 - x0) exactly up to roundoff.
    """
    from .rng import SIM, substream
    rng = substream(seed, SIM, 1)
    d = model.dim
    x = np.zeros((T + 1, d))
    y = np.zeros((T + 1, d))
    x[0] = np.atleast_1d(np.asarray(x0, dtype=float))
    y[0] = np.atleast_1d(np.asarray(y0, dtype=float))
    for t in range(T):
        w = model.noise.sample(rng, 1)[0]
        x[t + 1] = model.A @ x[t] + w
        y[t + 1] = model.A @ y[t] + w
    return CoupledPair(x, y, int(seed))


def coupling_gap(pair, model):
    """Max relative deviation of y_t - x_t from A^t (y0 - x0)."""
    delta0 = pair.y_path[0] - pair.x_path[0]
    worst = 0.0
    at = np.eye(model.dim)
    for t in range(pair.x_path.shape[0]):
        expect = at @ delta0
        actual = pair.y_path[t] - pair.x_path[t]
        scale = max(np.linalg.norm(expect), 1.0)
        worst = max(worst, np.linalg.norm(actual - expect) / scale)
        at = model.A @ at
    return worst


def save_particles_csv(belief, path):
    """Write a belief as CSV with columns w, x1..xd (round-trip exact)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w"] + [f"x{j + 1}" for j in range(belief.dim)])
        for w, x in zip(belief.weights, belief.particles):
            writer.writerow([repr(float(w))] + [repr(float(v)) for v in x])


def load_particles_csv(path):
    """Read a belief from the w, x1..xd CSV format."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "w":
        raise ValueError(f"{path}: expected header starting with 'w'")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return Belief(data[:, 1:], data[:, 0])
