"""M-cell quantizers with convex cells, parametrized as power diagrams.

Cell i collects the points where ||x - c_i||^2 - w_i is minimal, an
intersection of half-spaces, so every cell is convex by construction and the
class contains all nearest-neighbor quantizers (w = 0).  Encoding is total;
boundary ties go to the lowest index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .belief import Belief
from .errors import EmptyBeliefs, NonFinite
from .rng import LIBRARY, substream


@dataclass(frozen=True)
class ConvexQuantizer:
    """Power-diagram quantizer: sites (M, d) and additive weights (M,)."""

    sites: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        if self.weights is None:
            weights = np.zeros(sites.shape[0])
        else:
            weights = np.asarray(self.weights, dtype=float).ravel()
        if not (np.all(np.isfinite(sites)) and np.all(np.isfinite(weights))):
            raise NonFinite("quantizer parameters contain non-finite entries")
        if weights.shape[0] != sites.shape[0]:
            raise ValueError("sites/weights length mismatch")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "weights", weights)

    @property
    def M(self):
        return self.sites.shape[0]

    @property
    def dim(self):
        return self.sites.shape[1]

    def scores(self, X):
        """||x - c_i||^2 - w_i for every point/cell pair, shape (n, M)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sq = (np.sum(X ** 2, axis=1)[:, None]
              - 2.0 * X @ self.sites.T
              + np.sum(self.sites ** 2, axis=1)[None, :])
        return sq - self.weights[None, :]

    def encode_batch(self, X):
        """Cell index for each row of X; ties break to the lowest index."""
        return np.argmin(self.scores(X), axis=1)

    def encode(self, x):
        return int(self.encode_batch(np.atleast_2d(x))[0])


def lloyd_step(belief, q):
    """One Lloyd iteration against a belief: sites move to cell centroids.

    The returned quantizer has zero power weights; cells that carry no belief
    mass keep their previous site.
    """
    members = q.encode_batch(belief.particles)
    d = q.dim
    wsum = np.zeros(q.M)
    vsum = np.zeros((q.M, d))
    np.add.at(wsum, members, belief.weights)
    np.add.at(vsum, members, belief.weights[:, None] * belief.particles)
    sites = q.sites.copy()
    occupied = wsum > 0
    sites[occupied] = vsum[occupied] / wsum[occupied, None]
    return ConvexQuantizer(sites, np.zeros(q.M))


def _kmeanspp_sites(points, weights, M, rng):
    """k-means++ style site draw over a weighted point cloud."""
    n = points.shape[0]
    sites = np.empty((M, points.shape[1]))
    sites[0] = points[rng.choice(n, p=weights)]
    d2 = np.sum((points - sites[0]) ** 2, axis=1)
    for m in range(1, M):
        w = weights * d2
        tot = w.sum()
        if tot <= 0:
            sites[m] = points[rng.choice(n, p=weights)]
        else:
            sites[m] = points[rng.choice(n, p=w / tot)]
        d2 = np.minimum(d2, np.sum((points - sites[m]) ** 2, axis=1))
    return sites


def _lattice_quantizer(points, weights, M):
    """Deterministic scaled-lattice fallback centered on the cloud."""
    d = points.shape[1]
    mean = weights @ points
    std = np.sqrt(np.maximum(weights @ (points - mean) ** 2, 0.0))
    std[std == 0] = 1.0
    if M == 1:
        return ConvexQuantizer(mean[None, :], np.zeros(1))
    if d == 1:
        grid = mean[0] + std[0] * np.linspace(-1.5, 1.5, M)
        return ConvexQuantizer(grid[:, None], np.zeros(M))
    g = int(np.ceil(M ** (1.0 / d)))
    axes = [mean[j] + std[j] * np.linspace(-1.5, 1.5, g) for j in range(d)]
    pts = np.array(list(itertools.product(*axes)))
    dist = np.sum(((pts - mean) / std) ** 2, axis=1)
    order = np.lexsort(tuple(pts[:, j] for j in range(d - 1, -1, -1)) + (dist,))
    return ConvexQuantizer(pts[order[:M]], np.zeros(M))


def _canonical(q):
    """Sort sites lexicographically so equal libraries serialize identically."""
    keys = tuple(q.sites[:, j] for j in range(q.dim - 1, -1, -1))
    order = np.lexsort(keys)
    return ConvexQuantizer(q.sites[order], q.weights[order])


def design_action_library(beliefs, M, n_actions, lloyd_iters, seed):
    """Design n_actions nearest-neighbor quantizers spanning the beliefs.

    Candidate j is a Lloyd fixed point fitted to one of the beliefs (cycled
    with a stride so a small library still spans the whole list), seeded by
    k-means++ draws over that belief's particles.  When n_actions >= 2 the
    last slot is a deterministic scaled-lattice fallback fitted to the
    pooled particles.  Exact duplicates are redrawn from fresh substreams
    (degenerate beliefs may still yield fewer than n_actions).
    """
    if not beliefs:
        raise EmptyBeliefs("need at least one belief to design actions")
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    points = np.concatenate([b.particles for b in beliefs])
    weights = np.concatenate([b.weights for b in beliefs])
    weights = weights / weights.sum()
    n_lloyd = n_actions if n_actions == 1 else n_actions - 1
    stride = max(1, len(beliefs) // max(n_lloyd, 1))

    def lloyd_candidate(j):
        target = beliefs[(j * stride) % len(beliefs)]
        rng = substream(seed, LIBRARY, j)
        q = ConvexQuantizer(
            _kmeanspp_sites(target.particles, target.weights, M, rng))
        for _ in range(lloyd_iters):
            q2 = lloyd_step(target, q)
            if np.array_equal(q2.sites, q.sites):
                break
            q = q2
        return _canonical(q)

    library, seen = [], set()

    def push(q):
        key = q.sites.tobytes() + q.weights.tobytes()
        if key not in seen:
            seen.add(key)
            library.append(q)
            return True
        return False

    j = 0
    attempts = 0
    while len(library) < n_lloyd and attempts < 8 * n_actions + 8:
        push(lloyd_candidate(j))
        j += 1
        attempts += 1
    if n_actions >= 2:
        push(_canonical(_lattice_quantizer(points, weights, M)))
        while len(library) < n_actions and attempts < 16 * n_actions + 16:
            push(lloyd_candidate(j))
            j += 1
            attempts += 1
    return library


def convexity_probe(q, n_pairs, radius, seed, encode_fn=None):
    """Sample same-cell pairs and check the midpoint stays in the cell.

    encode_fn overrides the quantizer's encoder; tests use it to inject a
    non-convex partition as a negative control.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    enc = encode_fn if encode_fn is not None else q.encode_batch
    rng = substream(seed, LIBRARY, 7777)
    found = 0
    attempts = 0
    while found < n_pairs and attempts < 200 * n_pairs:
        n = min(4 * (n_pairs - found) + 16, 65536)
        x = rng.standard_normal((n, q.dim)) * radius
        y = rng.standard_normal((n, q.dim)) * radius
        cx = enc(x)
        cy = enc(y)
        same = cx == cy
        attempts += n
        if not np.any(same):
            continue
        mid = 0.5 * (x[same] + y[same])
        if np.any(enc(mid) != cx[same]):
            return False
        found += int(np.count_nonzero(same))
    return True
