"""Particle posterior over a static latent parameter.

The latent parameter does not evolve, so a filter step only reweights the
particles by the observation likelihood. Resampling (systematic, low
variance) is triggered by the caller or by :class:`ParticleFilter` when the
effective sample size drops below a threshold.
"""
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_weights

__all__ = [
    "ParticleBelief",
    "init_gaussian",
    "update",
    "ess",
    "resample_systematic",
    "sample",
    "posterior_mean",
    "posterior_std",
    "ParticleFilter",
]


@dataclass(frozen=True)
class ParticleBelief:
    """Weighted particle set. Treat as immutable; operations return new beliefs.

    Attributes
    ----------
    particles : ndarray of shape (n_particles, p)
    weights : ndarray of shape (n_particles,)
    degenerate : bool
        Set by :func:`update` when every particle had zero likelihood and the
        prior weights were kept instead.
    """

    particles: np.ndarray
    weights: np.ndarray
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        particles = np.asarray(self.particles, dtype=float)
        if particles.ndim == 1:
            particles = particles[:, None]
        if particles.ndim != 2 or particles.shape[0] < 1:
            raise ValueError("particles must have shape (n_particles, p) with n_particles >= 1")
        if not np.all(np.isfinite(particles)):
            raise ValueError("particles must be finite")
        weights = check_weights(self.weights, particles.shape[0])
        particles.setflags(write=False)
        weights = weights.copy()
        weights.setflags(write=False)
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    @property
    def n_particles(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]

    def to_dict(self):
        return {"particles": self.particles.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["particles"], dtype=float), np.asarray(d["weights"], dtype=float))


def _uniform(n):
    return np.full(n, 1.0 / n)


def init_gaussian(mean, stddev, n, rng, floor=None):
    """Draw `n` particles from a diagonal Gaussian with uniform weights.

    Parameters
    ----------
    mean, stddev : array_like of shape (p,)
    n : int
    rng : numpy.random.Generator
    floor : array_like of shape (p,), optional
        Per-dimension lower bound applied after sampling (NaN entries are
        ignored). The slot testbed uses it to keep half-widths positive.
    """
    n = check_count(n, "n")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    stddev = np.broadcast_to(np.asarray(stddev, dtype=float), mean.shape)
    if np.any(stddev < 0):
        raise ValueError("stddev entries must be nonnegative")
    particles = mean + stddev * rng.standard_normal((n, mean.size))
    if floor is not None:
        fl = np.broadcast_to(np.asarray(floor, dtype=float), mean.shape)
        particles = np.where(np.isnan(fl), particles, np.maximum(particles, np.nan_to_num(fl, nan=0.0)))
    return ParticleBelief(particles, _uniform(n))


def update(belief, z, likelihood, state=None):
    """Reweight by ``likelihood(z, particles, state)`` and renormalize.

    `likelihood` is evaluated on the whole particle array and must return
    one nonnegative value per particle. If all reweighted masses vanish the
    prior weights are returned with ``degenerate=True``.
    """
    lik = np.asarray(likelihood(z, belief.particles, state), dtype=float).reshape(-1)
    if lik.size != belief.n_particles:
        raise ValueError("likelihood must return one value per particle")
    if np.any(lik < 0) or np.any(np.isnan(lik)):
        raise ValueError("likelihood values must be nonnegative")
    unnorm = belief.weights * lik
    total = unnorm.sum()
    if not np.isfinite(total) or total <= 0.0:
        return ParticleBelief(belief.particles, belief.weights, degenerate=True)
    w = unnorm / total
    # one more pass pins the sum to 1 within rounding
    w /= w.sum()
    return ParticleBelief(belief.particles, w)


def ess(belief):
    """Effective sample size ``1 / sum(w**2)``."""
    w = belief.weights
    return float(1.0 / np.dot(w, w))


def systematic_counts(weights, offset):
    """Copy counts produced by systematic resampling for a draw offset in [0, 1)."""
    n = weights.size
    positions = (offset + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, positions, side="right")
    return np.bincount(idx, minlength=n)


def resample_systematic(belief, rng):
    """Systematic resampling to uniform weights.

    Particle ``i`` is copied either ``floor(N w_i)`` or ``ceil(N w_i)`` times.
    """
    counts = systematic_counts(belief.weights, rng.random())
    idx = np.repeat(np.arange(belief.n_particles), counts)
    return ParticleBelief(belief.particles[idx], _uniform(belief.n_particles))


def sample(belief, n, rng):
    """Draw `n` particles i.i.d. (with replacement) from the weighted belief."""
    n = check_count(n, "n")
    idx = rng.choice(belief.n_particles, size=n, replace=True, p=belief.weights)
    return belief.particles[idx]


def posterior_mean(belief):
    return belief.weights @ belief.particles


def posterior_std(belief):
    mean = posterior_mean(belief)
    var = belief.weights @ (belief.particles - mean) ** 2
    return np.sqrt(np.maximum(var, 0.0))


class ParticleFilter(BaseEstimator):
    """Sequential Bayes filter for a static latent parameter.

    Parameters
    ----------
    likelihood : callable
        ``likelihood(z, particles, state) -> (n_particles,)`` array.
    prior_mean, prior_std : array_like
        Diagonal Gaussian prior the particles are drawn from.
    n_particles : int, default=512
    ess_threshold : float, default=0.5
        Resample when the ESS falls below ``ess_threshold * n_particles``.
    floor : array_like, optional
        Lower clamp passed to :func:`init_gaussian`.
    random_state : int, default=0

    Attributes
    ----------
    belief_ : ParticleBelief
    n_updates_ : int
    n_resamples_ : int
    n_degenerate_ : int
    """

    def __init__(self, likelihood=None, prior_mean=0.0, prior_std=1.0, n_particles=512,
                 ess_threshold=0.5, floor=None, random_state=0):
        self.likelihood = likelihood
        self.prior_mean = prior_mean
        self.prior_std = prior_std
        self.n_particles = n_particles
        self.ess_threshold = ess_threshold
        self.floor = floor
        self.random_state = random_state

    def _init(self):
        if self.likelihood is None:
            raise ValueError("likelihood must be provided")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ValueError("ess_threshold must be a fraction in [0, 1]")
        self._rng = np.random.default_rng(self.random_state)
        self.belief_ = init_gaussian(self.prior_mean, self.prior_std, self.n_particles,
                                     self._rng, floor=self.floor)
        self.n_updates_ = 0
        self.n_resamples_ = 0
        self.n_degenerate_ = 0

    def fit(self, Z, states=None):
        """Start from the prior and assimilate every observation in `Z`."""
        self._init()
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if states is None:
            states = [None] * len(Z)
        for z, x in zip(Z, states):
            self._step(z, x)
        return self

    def partial_fit(self, z, state=None):
        if not hasattr(self, "belief_"):
            self._init()
        self._step(np.atleast_1d(np.asarray(z, dtype=float)), state)
        return self

    def _step(self, z, state):
        b = update(self.belief_, z, self.likelihood, state)
        self.n_updates_ += 1
        if b.degenerate:
            self.n_degenerate_ += 1
        elif ess(b) < self.ess_threshold * b.n_particles:
            b = resample_systematic(b, self._rng)
            self.n_resamples_ += 1
        self.belief_ = b

    def predict(self):
        """Posterior mean of the latent parameter."""
        check_is_fitted(self, "belief_")
        return posterior_mean(self.belief_)
