"""Linear stochastic source X_{t+1} = A X_t + W_t with Gaussian noise.

The contraction constant alpha is the largest eigenvalue of A'A and must be
below one; the analytic second-moment chain
E||X_t||^2 <= alpha^t m0 + sigma^2 (1 - alpha^t)/(1 - alpha) <= m0 + sigma^2/(1 - alpha)
is exposed for the verification suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .belief import Belief
from .errors import BadCovariance, NonFinite, UnstableSource
from .rng import SIM, substream


def max_sq_singular_value(A):
    """Largest eigenvalue of A'A (the squared maximum singular value)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix contains non-finite entries")
    return float(np.linalg.eigvalsh(A.T @ A)[-1])


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian noise with SPD covariance.

    The Gaussian family keeps the transition density positive, bounded and
    Lipschitz, which is assumed but never numerically enforced.  A degenerate
    (singular) covariance is allowed only with allow_degenerate=True, used by
    tests for the noiseless limit.
    """

    cov: np.ndarray
    allow_degenerate: bool = False
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if not np.all(np.isfinite(cov)):
            raise NonFinite("covariance contains non-finite entries")
        if cov.shape[0] != cov.shape[1]:
            raise BadCovariance(f"covariance is not square: {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise BadCovariance("covariance is not symmetric")
        if self.allow_degenerate:
            vals, vecs = np.linalg.eigh(cov)
            if np.any(vals < -1e-12):
                raise BadCovariance("covariance has negative eigenvalues")
            chol = vecs * np.sqrt(np.clip(vals, 0.0, None))
        else:
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise BadCovariance("covariance is not positive definite") from None
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self):
        return self.cov.shape[0]

    @property
    def sigma_sq(self):
        """E||W||^2 = trace of the covariance."""
        return float(np.trace(self.cov))

    def sample(self, rng, n):
        """Draw n noise vectors, shape (n, d)."""
        return rng.standard_normal((n, self.dim)) @ self._chol.T


@dataclass(frozen=True)
class SourceModel:
    """Validated linear source; immutable and safe to share across threads."""

    A: np.ndarray
    noise: NoiseModel
    alpha: float = field(init=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        alpha = max_sq_singular_value(A)
        if alpha >= 1.0:
            raise UnstableSource(f"max eigenvalue of A'A is {alpha:.6g} >= 1")
        if self.noise.dim != A.shape[0]:
            raise BadCovariance(
                f"noise dim {self.noise.dim} != source dim {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "alpha", alpha)

    @property
    def dim(self):
        return self.A.shape[0]


def validate(model):
    """Re-check the model invariants (raises UnstableSource/BadCovariance)."""
    alpha = max_sq_singular_value(model.A)
    if alpha >= 1.0:
        raise UnstableSource(f"max eigenvalue of A'A is {alpha:.6g} >= 1")
    NoiseModel(model.noise.cov, allow_degenerate=model.noise.allow_degenerate)
    if model.noise.dim != model.dim:
        raise BadCovariance("noise/source dimension mismatch")


@dataclass(frozen=True)
class InitialDistribution:
    """Either a point mass or a finite particle cloud with finite m2."""

    point: np.ndarray | None = None
    belief: Belief | None = None

    def __post_init__(self):
        if (self.point is None) == (self.belief is None):
            raise ValueError("exactly one of point / belief must be given")
        if self.point is not None:
            p = np.atleast_1d(np.asarray(self.point, dtype=float))
            if not np.all(np.isfinite(p)):
                raise NonFinite("initial point contains non-finite entries")
            object.__setattr__(self, "point", p)

    @classmethod
    def point_mass(cls, x):
        return cls(point=np.asarray(x, dtype=float))

    @classmethod
    def from_belief(cls, belief):
        return cls(belief=belief)

    @property
    def dim(self):
        if self.point is not None:
            return self.point.shape[0]
        return self.belief.dim

    def second_moment(self):
        if self.point is not None:
            return float(np.sum(self.point ** 2))
        from .belief import moments
        return moments(self.belief)[1]

    def sample(self, rng, n):
        """Draw n initial states, shape (n, d)."""
        if self.point is not None:
            return np.tile(self.point, (n, 1))
        idx = rng.choice(self.belief.size, size=n, p=self.belief.weights)
        return self.belief.particles[idx]

    def as_belief(self, n_particles, rng=None):
        """Standardize to n equally weighted particles (shared by both ends)."""
        if self.point is not None:
            return Belief.point_mass(self.point, n_particles)
        if self.belief.size == n_particles and self.belief.is_equal_weight():
            return self.belief
        if rng is None:
            raise ValueError("rng required to resample a weighted initial belief")
        return Belief.equal(self.sample(rng, n_particles))


def step(model, x, rng):
    """One transition A x + W with W drawn from the model noise."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return model.A @ x + model.noise.sample(rng, 1)[0]


def simulate(model, init, T, seed):
    """Trajectory X_0..X_T; the same seed reproduces it bit for bit."""
    rng = substream(seed, SIM, 0)
    path = np.zeros((T + 1, model.dim))
    path[0] = init.sample(rng, 1)[0]
    for t in range(T):
        path[t + 1] = model.A @ path[t] + model.noise.sample(rng, 1)[0]
    return path


def simulate_batch(model, init, T, n_traj, seed):
    """Vectorized batch of trajectories, shape (n_traj, T+1, d).

    Deterministic given (seed, n_traj, T); rows are not individually
    seed-stable across different batch sizes.
    """
    rng = substream(seed, SIM, 2)
    x = init.sample(rng, n_traj)
    out = np.zeros((n_traj, T + 1, model.dim))
    out[:, 0] = x
    for t in range(T):
        x = x @ model.A.T + model.noise.sample(rng, n_traj)
        out[:, t + 1] = x
    return out


def second_moment_bound(model, m0, t=None):
    """Analytic bound on E||X_t||^2 from the moment chain.

    For finite t this is alpha^t m0 + sigma^2 (1 - alpha^t)/(1 - alpha); with
    t=None it returns the uniform-in-t cap m0 + sigma^2/(1 - alpha).
    """
    alpha = model.alpha
    s2 = model.noise.sigma_sq
    if t is None:
        return float(m0 + s2 / (1.0 - alpha))
    if t < 0:
        raise ValueError("t must be >= 0")
    at = alpha ** t
    geom = (1.0 - at) / (1.0 - alpha)
    return float(at * m0 + s2 * geom)
