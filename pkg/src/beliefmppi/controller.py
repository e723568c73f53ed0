"""Risk-sensitive belief-space MPPI and the chance-constrained baseline.

One solve:

1. draw ``N_p`` parameter samples from the belief,
2. perturb the warm-start sequence into ``K`` candidates,
3. roll every (candidate, particle) pair through the model,
4. score each candidate by mean cost + ``lambda_r`` * cost CVaR
   + ``mu`` * positive part of the margin-violation CVaR,
5. exponentiate the scores into importance weights and average the
   perturbations.

Process noise is drawn once per particle and shared by all candidates
(common random numbers), so candidates are compared on identical
disturbances and permuting candidates permutes the rollout rows exactly.
"""
from dataclasses import dataclass, field, replace
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import belief as _belief
from ._validation import check_beta, check_count, check_spd
from .risk import cvar_tail_average
from .system import CONTROL_DIM

__all__ = [
    "MppiConfig",
    "CcConfig",
    "RolloutBatch",
    "SolveDiagnostics",
    "sample_candidates",
    "rollout_batch",
    "score",
    "score_batch",
    "cc_score_batch",
    "violation_fraction",
    "mppi_weights",
    "update_control",
    "shift_warm_start",
    "solve_step",
    "cc_solve_step",
    "RiskSensitiveMPPI",
    "CcMPPI",
]


@dataclass(frozen=True)
class MppiConfig:
    """Sampling sizes, temperature and risk settings of one MPPI solve.

    ``Sigma`` may be given as a scalar standard deviation (isotropic) or as
    a full ``m x m`` covariance. ``u_nominal=None`` sets the nominal mean
    equal to the warm start, which removes the weight correction term.
    """

    K: int = 64
    H: int = 12
    N_p: int = 16
    lam: float = 0.4
    Sigma: object = 15.0
    lambda_r: float = 0.5
    beta_c: float = 0.9
    beta_s: float = 0.9
    mu: float = 250.0
    u_max: float = 80.0
    u_nominal: object = None
    n_hold: int = 1
    m: int = CONTROL_DIM

    def __post_init__(self):
        check_count(self.K, "K")
        check_count(self.H, "H")
        check_count(self.N_p, "N_p")
        check_count(self.n_hold, "n_hold", minimum=0)
        if self.n_hold > self.K:
            raise ValueError("n_hold cannot exceed K")
        if not self.lam > 0:
            raise ValueError("temperature lam must be positive")
        if self.lambda_r < 0 or self.mu < 0:
            raise ValueError("lambda_r and mu must be nonnegative")
        check_beta(self.beta_c, "beta_c")
        check_beta(self.beta_s, "beta_s")
        if np.ndim(self.Sigma) == 0:
            if not float(self.Sigma) > 0:
                raise ValueError("Sigma must be positive definite")
        else:
            check_spd(self.Sigma)

    @property
    def covariance(self):
        if np.ndim(self.Sigma) == 0:
            return float(self.Sigma) ** 2 * np.eye(self.m)
        return np.asarray(self.Sigma, dtype=float)


@dataclass(frozen=True)
class CcConfig(MppiConfig):
    """Baseline settings: violation tolerance, penalty weight, point-estimate mode."""

    delta_h: float = 0.05
    mu_cc: float = 250.0
    mean_theta: bool = False

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.delta_h < 1.0:
            raise ValueError("delta_h must lie in [0, 1)")
        if self.mu_cc < 0:
            raise ValueError("mu_cc must be nonnegative")


@dataclass
class RolloutBatch:
    """Per (candidate, particle) costs and margins, both of shape ``(K, N_p)``."""

    costs: np.ndarray
    margins: np.ndarray
    perturbations: np.ndarray = None

    @property
    def shape(self):
        return self.costs.shape


@dataclass
class SolveDiagnostics:
    scores: np.ndarray
    mean_cost: np.ndarray
    cvar_cost: np.ndarray
    cvar_violation: np.ndarray
    weights: np.ndarray
    chosen_mean_cost: float
    chosen_cvar_cost: float
    chosen_cvar_violation: float
    chosen_margins: np.ndarray
    chosen_violation_fraction: float
    weight_fallback: bool
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self):
        """Empirical margin constraint of the returned sequence holds."""
        return self.chosen_cvar_violation <= 0.0

    def to_record(self):
        return {
            "chosen_mean_cost": self.chosen_mean_cost,
            "chosen_cvar_cost": self.chosen_cvar_cost,
            "chosen_cvar_violation": self.chosen_cvar_violation,
            "chosen_violation_fraction": self.chosen_violation_fraction,
            "best_score": float(np.min(self.scores)),
            "max_weight": float(np.max(self.weights)),
            "feasible": bool(self.feasible),
            "weight_fallback": bool(self.weight_fallback),
        }


def sample_candidates(u_hat, cfg, rng):
    """Perturb the warm start into ``K`` candidates, clamped to the control box.

    Returns ``(eps, candidates)``, each ``(K, H, m)``. The stored
    perturbations are the post-clamp differences actually applied. The last
    ``cfg.n_hold`` candidates are the all-zero (stop) sequence, so the
    sampler can always brake even when the warm start is moving fast.
    """
    u_hat = np.asarray(u_hat, dtype=float).reshape(cfg.H, cfg.m)
    L = np.linalg.cholesky(cfg.covariance)
    raw = rng.standard_normal((cfg.K, cfg.H, cfg.m)) @ L.T
    candidates = np.clip(u_hat + raw, -cfg.u_max, cfg.u_max)
    if cfg.n_hold:
        candidates[cfg.K - cfg.n_hold:] = 0.0
    return candidates - u_hat, candidates


def rollout_batch(model, x_t, candidates, thetas, noise=None, rng=None):
    """Simulate every candidate against every parameter sample.

    Parameters
    ----------
    model : SlotTestbed or compatible
    x_t : array of shape (n,)
    candidates : array of shape (K, H, m)
    thetas : array of shape (N_p, p)
    noise : array of shape (N_p, H, m), optional
        Standard-normal process noise per particle, shared across
        candidates. Drawn from `rng` when omitted.

    Returns
    -------
    RolloutBatch with ``costs`` and ``margins`` of shape (K, N_p).
    """
    candidates = np.asarray(candidates, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    K, H, m = candidates.shape
    n_p = thetas.shape[0]
    if noise is None:
        noise = (rng.standard_normal((n_p, H, m)) if rng is not None
                 else np.zeros((n_p, H, m)))
    x = np.broadcast_to(np.asarray(x_t, dtype=float), (K, n_p, len(x_t))).copy()
    costs = np.zeros((K, n_p))
    margins = model.safety_margin(x, thetas)
    for k in range(H):
        u = candidates[:, None, k, :]
        costs += model.stage_cost(x, u, thetas)
        x = model.step(x, u, thetas, noise=noise[None, :, k, :])
        np.minimum(margins, model.safety_margin(x, thetas), out=margins)
    costs += model.terminal_cost(x, thetas)
    return RolloutBatch(costs, margins)


def _score_terms(costs, margins, cfg):
    mean = costs.mean(axis=-1)
    cvar_c = cvar_tail_average(costs, cfg.beta_c, axis=-1)
    cvar_s = cvar_tail_average(-margins, cfg.beta_s, axis=-1)
    return mean, cvar_c, cvar_s


def score(costs_row, margins_row, cfg):
    """Score of one candidate from its ``N_p`` rollout costs and margins."""
    costs_row = np.asarray(costs_row, dtype=float)
    margins_row = np.asarray(margins_row, dtype=float)
    mean, cvar_c, cvar_s = _score_terms(costs_row[None], margins_row[None], cfg)
    return float(mean[0] + cfg.lambda_r * cvar_c[0] + cfg.mu * max(cvar_s[0], 0.0))


def score_batch(batch, cfg):
    """Vectorised scores; returns ``(S, mean_cost, cvar_cost, cvar_violation)``."""
    mean, cvar_c, cvar_s = _score_terms(batch.costs, batch.margins, cfg)
    return mean + cfg.lambda_r * cvar_c + cfg.mu * np.maximum(cvar_s, 0.0), mean, cvar_c, cvar_s


def violation_fraction(margins, axis=-1):
    """Fraction of particles whose trajectory margin is negative."""
    return np.mean(np.asarray(margins) < 0.0, axis=axis)


def cc_score_batch(batch, cfg):
    """Baseline scores: mean cost + ``mu_cc * (P_viol - delta_h)^+``."""
    mean = batch.costs.mean(axis=-1)
    p_viol = violation_fraction(batch.margins)
    return mean + cfg.mu_cc * np.maximum(p_viol - cfg.delta_h, 0.0), mean, p_viol


def mppi_weights(scores, perturbations, u_hat, cfg):
    """Normalised importance weights over the candidates.

    Returns ``(weights, fallback)``; `fallback` is True when the
    exponentials could not be normalised and uniform weights were used.
    """
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    eps = np.asarray(perturbations, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float).reshape(cfg.H, cfg.m)
    exponent = scores / cfg.lam
    if cfg.u_nominal is not None:
        diff = u_hat - np.asarray(cfg.u_nominal, dtype=float).reshape(cfg.H, cfg.m)
        sinv = np.linalg.inv(cfg.covariance)
        exponent = exponent + np.einsum("hi,ij,khj->k", diff, sinv, eps)
    exponent = exponent - exponent.min()
    w = np.exp(-exponent)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        return np.full(scores.size, 1.0 / scores.size), True
    return w / total, False


def update_control(u_hat, weights, perturbations, u_max=np.inf):
    """``u* = u_hat + sum_j rho_j eps_j``, clamped to the control box."""
    step = np.tensordot(np.asarray(weights, dtype=float), np.asarray(perturbations, dtype=float), axes=1)
    return np.clip(np.asarray(u_hat, dtype=float) + step, -u_max, u_max)


def shift_warm_start(u_star):
    """Drop the first step and repeat the last one."""
    u_star = np.asarray(u_star)
    return np.concatenate([u_star[1:], u_star[-1:]], axis=0)


def _draw_thetas(belief, cfg, rng):
    return _belief.sample(belief, cfg.N_p, rng)


def _solve(model, x_t, belief, u_hat, cfg, rng, scorer, thetas=None):
    t0 = time.perf_counter()
    u_hat = np.asarray(u_hat, dtype=float).reshape(cfg.H, cfg.m)
    if thetas is None:
        thetas = _draw_thetas(belief, cfg, rng)
    eps, candidates = sample_candidates(u_hat, cfg, rng)
    noise = rng.standard_normal((thetas.shape[0], cfg.H, cfg.m))
    batch = rollout_batch(model, x_t, candidates, thetas, noise=noise)
    batch.perturbations = eps
    S, mean, cvar_c, risk = scorer(batch)
    weights, fallback = mppi_weights(S, eps, u_hat, cfg)
    u_star = update_control(u_hat, weights, eps, cfg.u_max)
    # evaluate the returned sequence on the same samples and disturbances
    chosen = rollout_batch(model, x_t, u_star[None], thetas, noise=noise)
    c_mean, c_cvar, c_viol = _score_terms(chosen.costs, chosen.margins, cfg)
    diag = SolveDiagnostics(
        scores=S, mean_cost=mean, cvar_cost=cvar_c, cvar_violation=risk,
        weights=weights,
        chosen_mean_cost=float(c_mean[0]),
        chosen_cvar_cost=float(c_cvar[0]),
        chosen_cvar_violation=float(c_viol[0]),
        chosen_margins=chosen.margins[0],
        chosen_violation_fraction=float(violation_fraction(chosen.margins[0])),
        weight_fallback=fallback,
    )
    diag.extra["thetas"] = thetas
    diag.extra["noise"] = noise
    diag.extra["batch"] = batch
    diag.wall_time = time.perf_counter() - t0
    return u_star, diag


def solve_step(model, x_t, belief, u_hat, cfg, rng):
    """One receding-horizon solve of the CVaR-constrained controller.

    Returns ``(u_first, u_hat_next, diagnostics)``.
    """
    def scorer(batch):
        S, mean, cvar_c, cvar_s = score_batch(batch, cfg)
        return S, mean, cvar_c, cvar_s

    u_star, diag = _solve(model, x_t, belief, u_hat, cfg, rng, scorer)
    diag.extra["u_star"] = u_star
    return u_star[0].copy(), shift_warm_start(u_star), diag


def cc_solve_step(model, x_t, belief, u_hat, cfg, rng):
    """One solve of the chance-constrained baseline.

    Violation probability is the fraction of sampled particles with a
    negative trajectory margin. With ``cfg.mean_theta`` the rollouts use only
    the posterior mean parameter, so the fraction is 0 or 1.
    """
    cfg = replace(cfg, lambda_r=0.0) if cfg.lambda_r else cfg

    def scorer(batch):
        S, mean, p_viol = cc_score_batch(batch, cfg)
        return S, mean, np.zeros_like(mean), p_viol

    thetas = None
    if cfg.mean_theta:
        thetas = _belief.posterior_mean(belief)[None, :]
        # consume the same draws as particle mode to keep streams aligned
        _draw_thetas(belief, cfg, rng)
    u_star, diag = _solve(model, x_t, belief, u_hat, cfg, rng, scorer, thetas=thetas)
    diag.extra["u_star"] = u_star
    return u_star[0].copy(), shift_warm_start(u_star), diag


class RiskSensitiveMPPI(BaseEstimator):
    """Receding-horizon controller with a CVaR constraint on the trajectory margin.

    Parameters mirror :class:`MppiConfig`. Call :meth:`fit` with the system
    model, then :meth:`solve` once per control step; the estimator keeps the
    shifted warm start between calls.

    Attributes
    ----------
    model_ : SlotTestbed
    u_hat_ : ndarray of shape (horizon, m)
    n_solves_ : int
    """

    def __init__(self, n_candidates=64, horizon=12, n_particles=16, temperature=0.4,
                 sigma=15.0, lambda_r=0.5, beta_c=0.9, beta_s=0.9, mu=250.0, u_max=None,
                 n_hold=1):
        self.n_candidates = n_candidates
        self.horizon = horizon
        self.n_particles = n_particles
        self.temperature = temperature
        self.sigma = sigma
        self.lambda_r = lambda_r
        self.beta_c = beta_c
        self.beta_s = beta_s
        self.mu = mu
        self.u_max = u_max
        self.n_hold = n_hold

    def _config(self):
        u_max = self.u_max if self.u_max is not None else getattr(self.model_, "u_max", np.inf)
        return MppiConfig(K=self.n_candidates, H=self.horizon, N_p=self.n_particles,
                          lam=self.temperature, Sigma=self.sigma, lambda_r=self.lambda_r,
                          beta_c=self.beta_c, beta_s=self.beta_s, mu=self.mu, u_max=u_max,
                          n_hold=self.n_hold)

    def fit(self, model, u_init=None):
        """Bind the system model and reset the warm start (zeros by default)."""
        self.model_ = model
        self.config_ = self._config()
        if u_init is None:
            u_init = np.zeros((self.config_.H, self.config_.m))
        self.u_hat_ = np.asarray(u_init, dtype=float).reshape(self.config_.H, self.config_.m)
        self.n_solves_ = 0
        return self

    def _step(self, x, belief, rng):
        return solve_step(self.model_, x, belief, self.u_hat_, self.config_, rng)

    def solve(self, x, belief, rng):
        """Return ``(u_first, diagnostics)`` and advance the warm start."""
        check_is_fitted(self, "u_hat_")
        u0, u_next, diag = self._step(x, belief, rng)
        self.u_hat_ = u_next
        self.n_solves_ += 1
        return u0, diag

    def predict(self, x, belief, rng):
        return self.solve(x, belief, rng)[0]


class CcMPPI(RiskSensitiveMPPI):
    """Chance-constrained MPPI baseline (risk-neutral objective).

    Parameters
    ----------
    delta_h : float, default=0.05
        Tolerated violation probability.
    mu_cc : float, default=250.0
        Penalty on the excess violation probability.
    mean_theta : bool, default=False
        Roll out only the posterior mean parameter.
    """

    lambda_r = 0.0
    beta_c = 0.9
    mu = 0.0

    def __init__(self, n_candidates=64, horizon=12, n_particles=16, temperature=0.4,
                 sigma=15.0, delta_h=0.05, mu_cc=250.0, mean_theta=False, beta_s=0.9, u_max=None, n_hold=1):
        self.n_candidates = n_candidates
        self.horizon = horizon
        self.n_particles = n_particles
        self.temperature = temperature
        self.sigma = sigma
        self.delta_h = delta_h
        self.mu_cc = mu_cc
        self.mean_theta = mean_theta
        self.beta_s = beta_s
        self.u_max = u_max
        self.n_hold = n_hold

    def _config(self):
        base = super()._config()
        return CcConfig(**{**base.__dict__, "lambda_r": 0.0, "delta_h": self.delta_h,
                           "mu_cc": self.mu_cc, "mean_theta": self.mean_theta})

    def _step(self, x, belief, rng):
        return cc_solve_step(self.model_, x, belief, self.u_hat_, self.config_, rng)
