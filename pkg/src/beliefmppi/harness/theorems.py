"""Numerical checks of the controller's safety and limit guarantees.

Each check returns a :class:`Report` whose ``status`` is ``"pass"``,
``"fail"`` or ``"vacuous"`` (the hypothesis of the guarantee was never met,
so there is nothing to test).
"""
from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np

from .. import belief as bl
from ..controller import (
    CcConfig,
    MppiConfig,
    RolloutBatch,
    cc_score_batch,
    rollout_batch,
    sample_candidates,
    score_batch,
    solve_step,
)
from ..risk import cvar_tail_average, tail_size
from ..rng import stream

# stream purposes
_SCENE, _SOLVE, _VALID, _TEST, _BATCH = range(5)


@dataclass
class Report:
    name: str
    status: str
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return {"name": self.name, "status": self.status, **self.details}

    def summary(self):
        keys = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items()
                         if not isinstance(v, (list, dict, np.ndarray)))
        return f"{self.name}: {self.status.upper()} ({keys})"


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def binomial_band(p, n):
    """Three binomial standard errors at success probability `p`."""
    return 3.0 * math.sqrt(p * (1.0 - p) / n)


# ----------------------------------------------------------------------
# per-horizon safety implication


def insertion_scene(cfg, seed, height=48.0, spread=(3.0, 1.0)):
    """A state just above the opening and a Gaussian belief around a camera guess.

    The belief spread is a few millimetres, comparable to the lateral
    clearance, so the margin distribution of a descending plan has a
    genuine lower tail.
    """
    tb = cfg.testbed
    rng = stream(seed, _SCENE)
    c_hat = tb.c_nominal + spread[0] * rng.standard_normal()
    belief = bl.init_gaussian([c_hat, tb.w_nominal], spread, cfg.n_filter, rng,
                              floor=[np.nan, tb.w_floor])
    x = tb.initial_state([c_hat, tb.w_nominal], height)
    return x, belief


def margin_samples(model, x, u_seq, belief, n, rng):
    """Trajectory margins of one frozen plan under `n` fresh (theta, noise) draws."""
    u_seq = np.asarray(u_seq, dtype=float)
    thetas = bl.sample(belief, n, rng)
    noise = rng.standard_normal((n,) + u_seq.shape)
    return rollout_batch(model, x, u_seq[None], thetas, noise=noise).margins[0]


def verify_thm1(cfg, n_validation=10_000, seed=0, max_solves=30, scene=None):
    """Check ``Pr(M_H >= 0) >= beta_s`` for a plan meeting the CVaR constraint.

    The controller is re-solved from a fixed state (warm-started) until the
    returned sequence satisfies ``CVaR_{beta_s}(-M_H) <= 0`` on
    `n_validation` fresh draws. That sequence is frozen and its violation
    probability is estimated on a second, independent set of the same size,
    which is compared against ``beta_s - 3 SE``.
    """
    mcfg = cfg.mppi_config() if hasattr(cfg, "mppi_config") else cfg
    tb = cfg.testbed
    beta = mcfg.beta_s
    x, belief = scene if scene is not None else insertion_scene(cfg, seed)
    u_hat = np.zeros((mcfg.H, mcfg.m))
    band = binomial_band(beta, n_validation)
    for attempt in range(max_solves):
        diag = solve_step(tb, x, belief, u_hat, mcfg, stream(seed, _SOLVE, attempt))[2]
        u_star = diag.extra["u_star"]
        m_val = margin_samples(tb, x, u_star, belief, n_validation, stream(seed, _VALID, attempt))
        cvar_val = cvar_tail_average(-m_val, beta)
        u_hat = u_star  # same state, so no shift
        if cvar_val > 0.0:
            continue
        m_test = margin_samples(tb, x, u_star, belief, n_validation, stream(seed, _TEST, attempt))
        p_test = float(np.mean(m_test >= 0.0))
        ok = p_test >= beta - band
        return Report("thm1", "pass" if ok else "fail", {
            "beta_s": beta,
            "n_validation": n_validation,
            "solve_attempt": attempt,
            "cvar_validation": float(cvar_val),
            "p_safe_validation": float(np.mean(m_val >= 0.0)),
            "p_safe_test": p_test,
            "bound": beta - band,
            "band": band,
            "min_margin_test": float(m_test.min()),
            "descends": bool(u_star[:, 1].sum() < 0.0),
        })
    return Report("thm1", "vacuous", {"beta_s": beta, "n_validation": n_validation,
                                      "solve_attempts": max_solves})


# ----------------------------------------------------------------------
# risk-neutral limit


def critical_lambda(mean, cvar):
    """Largest ``lambda*`` such that every ``lambda_r < lambda*`` selects a mean minimiser.

    Works on a finite candidate set: ``lambda*`` is the smallest crossing
    point between a mean-optimal candidate with the lowest cost CVaR and any
    candidate with larger mean but smaller CVaR. Returns ``inf`` when no such
    crossing exists.
    """
    mean = np.asarray(mean, dtype=float)
    cvar = np.asarray(cvar, dtype=float)
    m_star = mean.min()
    opt = mean == m_star
    c_star = cvar[opt].min()
    others = ~opt & (cvar < c_star)
    if not others.any():
        return math.inf
    return float(np.min((mean[others] - m_star) / (c_star - cvar[others])))


def verify_thm2(batch, lambda_r_list, cfg):
    """Argmin of ``mean + lambda_r * CVaR_{beta_c}(J)`` tends to the argmin of the mean.

    Enumerates the candidates of a frozen batch whose margin CVaR is
    nonpositive. For every listed ``lambda_r`` below the critical value the
    risk-regularised argmin must lie in the set of mean minimisers. If the
    list never goes below the critical value, ``lambda*/2`` is appended so
    the limit is actually exercised.
    """
    mcfg = cfg.mppi_config() if hasattr(cfg, "mppi_config") else cfg
    mean = batch.costs.mean(axis=-1)
    cvar_c = cvar_tail_average(batch.costs, mcfg.beta_c, axis=-1)
    cvar_s = cvar_tail_average(-batch.margins, mcfg.beta_s, axis=-1)
    feasible = np.flatnonzero(cvar_s <= 0.0)
    if feasible.size == 0:
        return Report("thm2", "vacuous", {"reason": "empty feasible set"})
    m, c = mean[feasible], cvar_c[feasible]
    lam_star = critical_lambda(m, c)
    lams = sorted({float(v) for v in lambda_r_list}, reverse=True)
    extended = False
    if not any(v < lam_star for v in lams):
        lams.append(lam_star / 2.0)
        extended = True
    mean_opt = set(feasible[m == m.min()].tolist())
    choices, ok = [], True
    for lam in lams:
        j = int(feasible[np.argmin(m + lam * c)])
        choices.append(j)
        if lam < lam_star and j not in mean_opt:
            ok = False
    ok = ok and choices[-1] in mean_opt
    return Report("thm2", "pass" if ok else "fail", {
        "n_feasible": int(feasible.size),
        "lambda_star": lam_star,
        "lambda_list": lams,
        "choices": choices,
        "mean_argmin": sorted(mean_opt),
        "extended": extended,
        "crossover": len(set(choices)) > 1,
    })


def crossover_batch(n_particles=16, beta_c=0.9):
    """Two-candidate batch whose risk-aware and mean-optimal choices differ.

    Candidate 0 is cheaper on average but has an expensive tail; candidate 1
    costs a constant 2. With ``k`` the cost tail size the crossing point is
    ``(2 - 1) / (n/k - 2)``, i.e. 1/6 for the default sizes.
    """
    k = tail_size(n_particles, beta_c)
    risky = np.zeros(n_particles)
    risky[:k] = n_particles / k  # mean exactly 1, tail value n / k
    safe = np.full(n_particles, 2.0)
    costs = np.stack([risky, safe])
    margins = np.ones_like(costs)
    return RolloutBatch(costs, margins)


def random_batches(cfg, n, seed=0):
    """Frozen batches from rollouts at random states near the opening."""
    mcfg = cfg.mppi_config() if hasattr(cfg, "mppi_config") else cfg
    tb = cfg.testbed
    out = []
    for i in range(n):
        rng = stream(seed, _BATCH, i)
        height = rng.uniform(45.0, 90.0)
        scene_rng = stream(seed, _SCENE, i)
        c_hat = tb.c_nominal + 3.0 * scene_rng.standard_normal()
        belief = bl.init_gaussian([c_hat, tb.w_nominal], [3.0, 1.0], 64, scene_rng)
        x = tb.initial_state([c_hat, tb.w_nominal], height)
        u_hat = np.tile([0.0, -rng.uniform(0.0, 60.0)], (mcfg.H, 1))
        eps, cand = sample_candidates(u_hat, mcfg, rng)
        thetas = bl.sample(belief, mcfg.N_p, rng)
        batch = rollout_batch(tb, x, cand, thetas, rng=rng)
        batch.perturbations = eps
        out.append(batch)
    return out


# ----------------------------------------------------------------------
# cumulative receding-horizon safety


def verify_thm3(cfg, T=5, n_runs=400, seed=0, max_attempts=None):
    """Joint safety of ``T`` consecutive re-solves against ``1 - T (1 - beta_s)``.

    Each run draws a true parameter from the initial belief and executes
    ``T`` closed-loop steps. After every solve the full planned sequence is
    replayed under the true parameter with fresh process noise; its
    trajectory margin is that solve's ``M_H``. A run counts as jointly safe
    when all ``T`` margins are nonnegative. Runs with any solve violating the
    empirical CVaR constraint are excluded, as the guarantee assumes them away,
    and further seeded runs are drawn until `n_runs` runs are included (at
    most `max_attempts`, default ``2 * n_runs``, are tried).
    """
    mcfg = cfg.mppi_config() if hasattr(cfg, "mppi_config") else cfg
    tb = cfg.testbed
    beta = mcfg.beta_s
    # exact in the decimal reading of beta, so T = 10 at 0.9 gives 0 and not 2e-16
    bound = float(1 - T * (1 - Fraction(repr(beta))))
    if bound <= 0.0:
        return Report("thm3", "vacuous", {"reason": "T (1 - beta_s) >= 1", "bound": bound})
    max_attempts = 2 * n_runs if max_attempts is None else max_attempts
    safe, included, excluded = 0, 0, 0
    slack_margins = []
    for r in range(max_attempts):
        if included == n_runs:
            break
        x, belief = insertion_scene(cfg, stream(seed, _SCENE, r).integers(2**62))
        theta_true = bl.sample(belief, 1, stream(seed, _TEST, r, 0))[0]
        u_hat = np.zeros((mcfg.H, mcfg.m))
        margins, feasible = [], True
        for t in range(T):
            z = tb.observe(x, theta_true, stream(seed, _VALID, r, t))
            belief = bl.update(belief, z, tb.observe_likelihood, x)
            if bl.ess(belief) < cfg.N_thr * belief.n_particles:
                belief = bl.resample_systematic(belief, stream(seed, _VALID, r, t, 1))
            u, u_next, diag = solve_step(tb, x, belief, u_hat, mcfg, stream(seed, _SOLVE, r, t))
            feasible &= diag.feasible
            replay = stream(seed, _TEST, r, t + 1)
            noise = replay.standard_normal((1, mcfg.H, mcfg.m))
            traj = rollout_batch(tb, x, diag.extra["u_star"][None], theta_true[None], noise=noise)
            margins.append(float(traj.margins[0, 0]))
            x = tb.step(x, u, theta_true, rng=replay)
            u_hat = u_next
        if not feasible:
            excluded += 1
            continue
        included += 1
        safe += all(m >= 0.0 for m in margins)
        slack_margins.append(min(margins))
    if included == 0:
        return Report("thm3", "vacuous", {"reason": "every run had an infeasible solve",
                                          "excluded": excluded})
    p = safe / included
    band = binomial_band(bound, included)
    return Report("thm3", "pass" if p >= bound - band else "fail", {
        "beta_s": beta,
        "T": T,
        "runs": included + excluded,
        "requested": n_runs,
        "included": included,
        "excluded": excluded,
        "p_joint_safe": p,
        "bound": bound,
        "band": band,
        "slack": p - bound,
        "worst_margin": float(min(slack_margins)),
    })


# ----------------------------------------------------------------------
# CVaR penalty versus violation-probability penalty


def one_violator_batch(depth, n_particles=16, safe_margin=5.0, cost=1.0):
    """One candidate whose particle 0 has margin ``-depth`` and the rest are safe."""
    margins = np.full((1, n_particles), safe_margin)
    margins[0, 0] = -float(depth)
    return RolloutBatch(np.full((1, n_particles), cost), margins)


def magnitude_sensitivity(depths=(1.0, 10.0, 100.0), n_batches=1000, beta_s=0.95,
                          delta_h=0.05, seed=0):
    """CVaR scores grow with violation depth; the violation-fraction penalty does not.

    Each of `n_batches` random batches has a single violating particle at a
    random index, random safe margins and random costs; the depth of that
    particle is swept over `depths` with everything else fixed.
    """
    cfg = MppiConfig(beta_s=beta_s, beta_c=0.9)
    cc = CcConfig(beta_s=beta_s, beta_c=0.9, lambda_r=0.0, mu=0.0, delta_h=delta_h)
    cvar_increasing = cc_constant = True
    for b in range(n_batches):
        rng = stream(seed, _BATCH, b)
        costs = rng.uniform(0.0, 10.0, size=(1, cfg.N_p))
        base = rng.uniform(0.5, 20.0, size=(1, cfg.N_p))
        idx = int(rng.integers(cfg.N_p))
        cv, pen = [], []
        for d in depths:
            margins = base.copy()
            margins[0, idx] = -d
            batch = RolloutBatch(costs, margins)
            cv.append(float(score_batch(batch, cfg)[0][0]))
            pen.append(float(cc_score_batch(batch, cc)[0][0]))
        cvar_increasing &= all(a < b for a, b in zip(cv, cv[1:]))
        cc_constant &= all(a == b for a, b in zip(pen, pen[1:]))
    ok = bool(cvar_increasing and cc_constant)
    return Report("magnitude", "pass" if ok else "fail", {
        "n_batches": n_batches,
        "depths": list(depths),
        "cvar_strictly_increasing": bool(cvar_increasing),
        "cc_penalty_constant": bool(cc_constant),
    })
