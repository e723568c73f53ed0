"""Closed-loop episodes on the slot testbed."""
from dataclasses import asdict, dataclass, field
import time

import numpy as np

from .. import belief as bl
from ..controller import cc_solve_step, solve_step
from ..rng import stream
from .smoothing import savgol_smooth

# stream purposes
_TRUTH, _FILTER, _SOLVE, _OBS, _PROCESS = range(5)


@dataclass
class StepRecord:
    t: int
    state: list
    control: list
    observation: list
    belief_mean: list
    belief_std: list
    ess: float
    resampled: bool
    degenerate_update: bool
    margin: float
    clearance_margin: float
    force_margin: float
    grasp_margin: float
    contact_force: float
    diagnostics: dict


@dataclass
class EpisodeRecord:
    seed: int
    label: str
    theta_true: list
    theta_hat: list
    x0: list
    steps: list = field(default_factory=list)
    success: bool = False
    contact: bool = False
    aborted: bool = False
    min_margin: float = float("inf")
    max_force: float = 0.0
    mean_force: float = 0.0
    final_distance: float = float("nan")
    mean_cvar_violation: float = float("nan")
    n_infeasible: int = 0
    wall_times: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.steps)

    def to_dict(self, include_steps=True):
        d = asdict(self)
        d.pop("wall_times")
        if not include_steps:
            d.pop("steps")
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        steps = [StepRecord(**s) for s in d.pop("steps", [])]
        return cls(**d, steps=steps)


def draw_truth(cfg, seed):
    """True slot parameter and the noisy camera estimate the belief starts from."""
    rng = stream(seed, _TRUTH)
    tb = cfg.testbed
    c_true = tb.c_nominal + cfg.sigma_p * rng.standard_normal()
    w_true = max(tb.w_nominal + cfg.w_jitter * rng.standard_normal(), tb.w_floor)
    c_hat = c_true + cfg.sigma_p * rng.standard_normal()
    return np.array([c_true, w_true]), np.array([c_hat, tb.w_nominal])


def initial_belief(cfg, theta_hat, seed):
    tb = cfg.testbed
    return bl.init_gaussian(theta_hat, [cfg.sigma_p, cfg.w_jitter], cfg.n_filter,
                            stream(seed, _FILTER), floor=[np.nan, tb.w_floor])


def run_episode(cfg, seed, theta_true=None, theta_hat=None, belief=None):
    """Simulate one receding-horizon episode.

    Each step observes the true system, updates (and if needed resamples)
    the belief, solves for a control sequence and applies its first element
    to the true dynamics. The loop stops early on success or when the
    exterior force exceeds ``abort_factor * f_env_max``.
    """
    tb = cfg.testbed
    mcfg = cfg.mppi_config()
    solver = cc_solve_step if cfg.variant == "cc" else solve_step
    if theta_true is None or theta_hat is None:
        drawn_true, drawn_hat = draw_truth(cfg, seed)
        theta_true = drawn_true if theta_true is None else np.asarray(theta_true, dtype=float)
        theta_hat = drawn_hat if theta_hat is None else np.asarray(theta_hat, dtype=float)
    if belief is None:
        belief = initial_belief(cfg, theta_hat, seed)
    filter_rng = stream(seed, _FILTER, 1)
    x = tb.initial_state(theta_hat, cfg.start_height)
    u_hat = np.zeros((mcfg.H, mcfg.m))
    rec = EpisodeRecord(seed=int(seed), label=cfg.label(), theta_true=theta_true.tolist(),
                        theta_hat=np.asarray(theta_hat, dtype=float).tolist(), x0=x.tolist())
    abort_force = cfg.abort_factor * tb.f_env_max
    positions = [x[:2].copy()]
    for t in range(cfg.T):
        t0 = time.perf_counter()
        z = tb.observe(x, theta_true, stream(seed, _OBS, t))
        belief = bl.update(belief, z, tb.observe_likelihood, x)
        degenerate = belief.degenerate
        resampled = False
        if not degenerate and bl.ess(belief) < cfg.N_thr * belief.n_particles:
            belief = bl.resample_systematic(belief, filter_rng)
            resampled = True
        u, u_hat, diag = solver(tb, x, belief, u_hat, mcfg, stream(seed, _SOLVE, t))
        x = tb.step(x, u, theta_true, rng=stream(seed, _PROCESS, t))
        rec.wall_times.append(time.perf_counter() - t0)
        positions.append(x[:2].copy())
        d_ch, f_ch, g_ch = (float(v) for v in tb.margin_channels(x, theta_true))
        force = float(tb.contact_force(x, theta_true))
        rec.steps.append(StepRecord(
            t=t, state=x.tolist(), control=u.tolist(), observation=z.tolist(),
            belief_mean=bl.posterior_mean(belief).tolist(),
            belief_std=bl.posterior_std(belief).tolist(), ess=bl.ess(belief),
            resampled=resampled, degenerate_update=bool(degenerate),
            margin=min(d_ch, f_ch, g_ch), clearance_margin=d_ch, force_margin=f_ch,
            grasp_margin=g_ch, contact_force=force, diagnostics=diag.to_record(),
        ))
        if force > abort_force:
            rec.aborted = True
            break
        if _settled(cfg, positions, x, theta_true):
            break
    _finalize(rec, cfg, np.array(positions), x, theta_true)
    return rec


def _smoothed_end(cfg, positions):
    positions = np.asarray(positions)
    if positions.shape[0] >= cfg.smooth_window:
        return savgol_smooth(positions, cfg.smooth_window, cfg.smooth_degree)[-1]
    return positions[-1]


def _settled(cfg, positions, x, theta_true):
    # judged on the smoothed path so the early stop agrees with the final verdict
    tb = cfg.testbed
    if tb.clearance(x, theta_true) < 0.0:
        return False
    end = _smoothed_end(cfg, positions)
    return float(np.linalg.norm(end - tb.goal(theta_true))) <= tb.eps_p


def _finalize(rec, cfg, positions, x, theta_true):
    tb = cfg.testbed
    margins = [s.margin for s in rec.steps]
    forces = [s.contact_force for s in rec.steps]
    rec.min_margin = float(min(margins)) if margins else float("inf")
    rec.max_force = float(max(forces)) if forces else 0.0
    rec.mean_force = float(np.mean(forces)) if forces else 0.0
    rec.contact = rec.max_force > 0.0
    cv = [s.diagnostics["chosen_cvar_violation"] for s in rec.steps]
    rec.mean_cvar_violation = float(np.mean(cv)) if cv else float("nan")
    rec.n_infeasible = int(sum(not s.diagnostics["feasible"] for s in rec.steps))
    final = _smoothed_end(cfg, positions)
    rec.final_distance = float(np.linalg.norm(final - tb.goal(theta_true)))
    penetrating = tb.clearance(x, theta_true) < 0.0
    rec.success = bool(rec.final_distance <= tb.eps_p and not penetrating and not rec.aborted)
