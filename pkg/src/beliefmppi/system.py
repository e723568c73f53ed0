"""Planar slot-insertion testbed.

A square object (half-width ``r_obj``) carried by a velocity-controlled
point must be lowered into a slot whose opening lies on ``y = 0``. The slot
center ``c`` and half-width ``w`` are the latent parameter ``theta = (c, w)``.
Units are millimetres, seconds and newtons throughout.

State layout is ``(px, py, ux_prev, uy_prev)``: the last applied velocity is
carried along because the grasp-load surrogate depends on it. Every
function broadcasts over leading axes, so a ``(K, N, 4)`` state array and an
``(N, 2)`` parameter array evaluate ``K * N`` rollouts in one call.
"""
from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = ["SlotTestbed", "Trajectory", "STATE_DIM", "CONTROL_DIM", "box_signed_distance"]

STATE_DIM = 4
CONTROL_DIM = 2


@dataclass(frozen=True)
class Trajectory:
    """``H + 1`` states and the ``H`` controls that produced them."""

    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float).reshape(-1, CONTROL_DIM)
        if states.ndim != 2 or states.shape[0] != controls.shape[0] + 1:
            raise ValueError("a trajectory needs H + 1 states for H controls")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def horizon(self):
        return self.controls.shape[0]


def box_signed_distance(ax0, ax1, ay0, ay1, bx0, bx1, by0, by1):
    """Signed distance between axis-aligned boxes; negative is penetration depth.

    Bounds may be infinite, which is how the slot walls are modelled.
    """
    with np.errstate(invalid="ignore"):
        gx = np.maximum(bx0 - ax1, ax0 - bx1)
        gy = np.maximum(by0 - ay1, ay0 - by1)
    outside = np.hypot(np.maximum(gx, 0.0), np.maximum(gy, 0.0))
    inside = np.minimum(np.maximum(gx, gy), 0.0)
    return outside + inside


@dataclass(frozen=True)
class SlotTestbed:
    """Geometry, noise and cost constants of the slot task.

    Defaults: 80 mm square object in a 97.5 mm wide slot, i.e. 8.75 mm of
    lateral clearance per side at the nominal half-width.
    """

    # kinematics
    dt: float = 0.1
    sigma_w: float = 0.5
    u_max: float = 80.0
    # geometry
    depth: float = 100.0
    r_obj: float = 40.0
    c_nominal: float = 0.0
    w_nominal: float = 48.75
    w_floor: float = 1.0
    stored_block: bool = False
    w_env: float = 20.0
    block_height: float = 40.0
    # observation
    sigma_v: float = 5.0
    # safety
    d_min: float = 2.0
    k_contact: float = 100.0
    f_env_max: float = 80.0
    f_grasp_max: float = 80.0
    c_grasp: float = 0.5
    # cost
    q_x: float = 1e-4
    q_y: float = 1e-4
    r_ctrl: float = 1e-5
    q_terminal: float = 1e-3
    ref_hover: float = 30.0
    eps_p: float = 60.0

    def __post_init__(self):
        if self.depth <= 0 or self.r_obj <= 0:
            raise ValueError("depth and r_obj must be positive")
        if self.dt <= 0 or self.u_max <= 0:
            raise ValueError("dt and u_max must be positive")
        if min(self.sigma_w, self.sigma_v) < 0:
            raise ValueError("noise scales must be nonnegative")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown testbed keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    @property
    def nominal_theta(self):
        return np.array([self.c_nominal, self.w_nominal])

    # ------------------------------------------------------------------
    # dynamics and observation

    def clamp(self, u):
        return np.clip(u, -self.u_max, self.u_max)

    def step(self, x, u, theta=None, rng=None, noise=None):
        """Euler step ``p' = p + u dt + w`` with ``w ~ N(0, sigma_w^2 I)``.

        Pass either `rng` or pre-drawn standard-normal `noise` (scaled by
        ``sigma_w`` here). `theta` does not enter the testbed kinematics.
        """
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        p = x[..., :2] + u * self.dt
        if noise is not None:
            p = p + self.sigma_w * noise
        elif rng is not None and self.sigma_w > 0:
            p = p + self.sigma_w * rng.standard_normal(p.shape)
        return np.concatenate([p, np.broadcast_to(u, p.shape)], axis=-1)

    def observe(self, x, theta, rng):
        """Noisy camera reading of the slot center."""
        theta = np.asarray(theta, dtype=float)
        return np.atleast_1d(theta[..., 0] + self.sigma_v * rng.standard_normal())

    def observe_likelihood(self, z, theta, x=None):
        """Gaussian density of ``z - c`` with standard deviation ``sigma_v``.

        A noiseless camera (``sigma_v = 0``) gives an indicator of exact agreement.
        """
        theta = np.asarray(theta, dtype=float)
        d = np.asarray(z, dtype=float)[..., 0] - theta[..., 0]
        s = self.sigma_v
        if s == 0.0:
            return (d == 0.0).astype(float)
        return np.exp(-0.5 * (d / s) ** 2) / (s * np.sqrt(2.0 * np.pi))

    # ------------------------------------------------------------------
    # geometry and safety

    def goal(self, theta):
        """Placement target ``(c, -D + r_obj)``: object resting at the slot bottom."""
        theta = np.asarray(theta, dtype=float)
        c = theta[..., 0]
        return np.stack([c, np.full_like(c, -self.depth + self.r_obj)], axis=-1)

    def reference(self, x, theta):
        """Waypoint guiding the object: hover over the slot center, then the goal.

        While the object's lower face is above the opening the waypoint sits
        ``ref_hover`` mm above the opening; once it has entered, the goal.
        """
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        c, py = np.broadcast_arrays(theta[..., 0], x[..., 1])
        y = np.where(py - self.r_obj > 0.0, self.r_obj + self.ref_hover, -self.depth + self.r_obj)
        return np.stack([c, y], axis=-1)

    def clearance(self, x, theta):
        """Signed distance from the object to the slot walls (and stored block)."""
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        px, py = x[..., 0], x[..., 1]
        c, w = theta[..., 0], theta[..., 1]
        r = self.r_obj
        ax0, ax1, ay0, ay1 = px - r, px + r, py - r, py + r
        inf = np.inf
        left = box_signed_distance(ax0, ax1, ay0, ay1, -inf, c - w, -inf, 0.0)
        right = box_signed_distance(ax0, ax1, ay0, ay1, c + w, inf, -inf, 0.0)
        d = np.minimum(left, right)
        if self.stored_block:
            block = box_signed_distance(ax0, ax1, ay0, ay1, c - w, c - w + self.w_env,
                                        -self.depth, -self.depth + self.block_height)
            d = np.minimum(d, block)
        return d

    def contact_force(self, x, theta):
        """Linear penalty force ``k_c * penetration``."""
        return self.k_contact * np.maximum(-self.clearance(x, theta), 0.0)

    def grasp_load(self, x):
        x = np.asarray(x, dtype=float)
        return self.c_grasp * np.hypot(x[..., 2], x[..., 3])

    def margin_channels(self, x, theta):
        """The three safety terms: clearance, contact force and grasp load."""
        d = self.clearance(x, theta)
        f_env = self.k_contact * np.maximum(-d, 0.0)
        return (d - self.d_min,
                self.f_env_max - f_env,
                self.f_grasp_max - self.grasp_load(x))

    def safety_margin(self, x, theta):
        """``h(x, theta)``: positive inside the safe set, negative on violation."""
        a, b, c = self.margin_channels(x, theta)
        return np.minimum(np.minimum(a, b), c)

    def success(self, x, theta_true):
        x = np.asarray(x, dtype=float)
        dist = np.linalg.norm(x[..., :2] - self.goal(theta_true), axis=-1)
        return (dist <= self.eps_p) & (self.clearance(x, theta_true) >= 0.0)

    # ------------------------------------------------------------------
    # costs

    def stage_cost(self, x, u, theta):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        e = x[..., :2] - self.reference(x, theta)
        return (self.q_x * e[..., 0] ** 2 + self.q_y * e[..., 1] ** 2
                + self.r_ctrl * np.sum(u * u, axis=-1))

    def terminal_cost(self, x, theta):
        x = np.asarray(x, dtype=float)
        e = x[..., :2] - self.goal(theta)
        return self.q_terminal * np.sum(e * e, axis=-1)

    def trajectory_cost(self, traj, theta):
        """Sum of stage costs over the controls plus the terminal cost."""
        stage = sum(float(self.stage_cost(x, u, theta))
                    for x, u in zip(traj.states[:-1], traj.controls))
        return stage + float(self.terminal_cost(traj.states[-1], theta))

    def trajectory_margin(self, traj, theta):
        """Worst safety margin along the trajectory, initial state included."""
        states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
        return float(np.min(self.safety_margin(states, theta)))

    def simulate(self, x0, controls, theta, rng=None, noise=None):
        """Roll `controls` forward from `x0` and return the :class:`Trajectory`."""
        controls = np.asarray(controls, dtype=float).reshape(-1, CONTROL_DIM)
        states = [np.asarray(x0, dtype=float)]
        for k, u in enumerate(controls):
            nk = None if noise is None else noise[k]
            states.append(self.step(states[-1], u, theta, rng=rng, noise=nk))
        return Trajectory(np.array(states), controls)

    def initial_state(self, theta_hat, height=80.0):
        """Object above the estimated slot center, at rest."""
        return np.array([float(np.asarray(theta_hat)[0]), height, 0.0, 0.0])
