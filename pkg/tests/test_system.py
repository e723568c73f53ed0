import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beliefmppi.system import SlotTestbed, Trajectory, box_signed_distance

THETA = np.array([0.0, 48.75])


def at(px, py, ux=0.0, uy=0.0):
    return np.array([px, py, ux, uy])


class TestStep:
    def test_zero_control_is_fixed_point(self):
        tb = SlotTestbed(sigma_w=0.0)
        x = at(3.0, 7.0)
        np.testing.assert_array_equal(tb.step(x, [0.0, 0.0], THETA)[:2], [3.0, 7.0])

    def test_euler_step(self):
        tb = SlotTestbed(sigma_w=0.0)
        out = tb.step(at(0.0, 0.0), [10.0, 0.0], THETA, rng=np.random.default_rng(0))
        np.testing.assert_allclose(out[:2], [1.0, 0.0])
        np.testing.assert_array_equal(out[2:], [10.0, 0.0])

    def test_noise_covariance(self):
        tb = SlotTestbed(sigma_w=1.0)
        x = np.zeros((200_000, 4))
        out = tb.step(x, np.zeros(2), THETA, rng=np.random.default_rng(1))
        np.testing.assert_allclose(np.cov(out[:, :2].T), np.eye(2), atol=0.05)

    def test_pre_drawn_noise_is_scaled(self):
        tb = SlotTestbed(sigma_w=0.5)
        out = tb.step(at(0.0, 0.0), [0.0, 0.0], THETA, noise=np.array([2.0, -4.0]))
        np.testing.assert_allclose(out[:2], [1.0, -2.0])


class TestObservation:
    def test_peak_density(self):
        tb = SlotTestbed(sigma_v=5.0)
        peak = tb.observe_likelihood([0.0], THETA)
        assert peak == pytest.approx(1.0 / (5.0 * np.sqrt(2 * np.pi)))

    def test_one_sigma_ratio(self):
        tb = SlotTestbed(sigma_v=5.0)
        peak = tb.observe_likelihood([0.0], THETA)
        assert tb.observe_likelihood([5.0], THETA) == pytest.approx(peak * np.exp(-0.5))
        assert tb.observe_likelihood([-5.0], THETA) == pytest.approx(peak * np.exp(-0.5))

    def test_vectorised_over_particles(self):
        tb = SlotTestbed()
        thetas = np.array([[0.0, 48.75], [5.0, 48.75], [-5.0, 50.0]])
        lik = tb.observe_likelihood([0.0], thetas)
        assert lik.shape == (3,)
        assert lik[1] == pytest.approx(lik[2])

    def test_observe_statistics(self):
        tb = SlotTestbed(sigma_v=5.0)
        rng = np.random.default_rng(2)
        z = np.array([tb.observe(at(0, 80), [3.0, 48.75], rng)[0] for _ in range(20_000)])
        assert abs(z.mean() - 3.0) < 0.15
        assert abs(z.std() - 5.0) < 0.15


class TestCosts:
    def test_stage_cost_zero_at_reference(self):
        tb = SlotTestbed()
        x = at(0.0, tb.r_obj + tb.ref_hover)
        assert tb.stage_cost(x, np.zeros(2), THETA) == 0.0

    def test_stage_cost_euclidean_square(self):
        tb = SlotTestbed(q_x=1.0, q_y=1.0, r_ctrl=1.0)
        ref = tb.reference(at(0.0, 100.0), THETA)
        x = at(ref[0] + 3.0, ref[1] + 4.0)
        assert tb.stage_cost(x, np.zeros(2), THETA) == pytest.approx(25.0)

    def test_stage_cost_control_term(self):
        tb = SlotTestbed(q_x=0.0, q_y=0.0, r_ctrl=2.0)
        assert tb.stage_cost(at(0, 0), np.array([1.0, 2.0]), THETA) == pytest.approx(10.0)

    def test_reference_switches_to_goal_inside_slot(self):
        tb = SlotTestbed()
        np.testing.assert_allclose(tb.reference(at(0.0, 10.0), THETA), tb.goal(THETA))
        assert tb.reference(at(0.0, 45.0), THETA)[1] == tb.r_obj + tb.ref_hover

    def test_terminal_cost(self):
        tb = SlotTestbed(q_terminal=1.0)
        g = tb.goal(THETA)
        assert tb.terminal_cost(at(*g), THETA) == 0.0
        assert tb.terminal_cost(at(g[0], g[1] + 10.0), THETA) == pytest.approx(100.0)

    def test_trajectory_cost_stationary_at_goal(self):
        tb = SlotTestbed()
        g = tb.goal(THETA)
        traj = tb.simulate(at(*g), np.zeros((5, 2)), THETA)
        assert tb.trajectory_cost(traj, THETA) == 0.0

    def test_trajectory_cost_is_stage_plus_terminal(self):
        tb = SlotTestbed(sigma_w=0.0)
        x0, u = at(5.0, 90.0), np.array([1.0, -20.0])
        traj = tb.simulate(x0, u[None], THETA)
        a = tb.stage_cost(x0, u, THETA)
        b = tb.terminal_cost(traj.states[-1], THETA)
        assert tb.trajectory_cost(traj, THETA) == pytest.approx(a + b)

    @given(px=st.floats(-100, 100), py=st.floats(-60, 200),
           ux=st.floats(-80, 80), uy=st.floats(-80, 80))
    def test_costs_nonnegative(self, px, py, ux, uy):
        tb = SlotTestbed()
        assert tb.stage_cost(at(px, py), np.array([ux, uy]), THETA) >= 0.0
        assert tb.terminal_cost(at(px, py), THETA) >= 0.0


class TestSafety:
    def test_centered_in_slot(self):
        tb = SlotTestbed()
        assert tb.safety_margin(at(0.0, -30.0), THETA) == pytest.approx(6.75)

    def test_far_above_opening(self):
        tb = SlotTestbed()
        # straddling the left wall edge, lower face 50 mm above the opening
        x = at(-48.75, tb.r_obj + 50.0)
        assert tb.safety_margin(x, THETA) == pytest.approx(48.0)
        assert tb.contact_force(x, THETA) == 0.0

    def test_penetration_force_term_dominates(self):
        tb = SlotTestbed()
        x = at(48.75 - tb.r_obj + 1.0, -30.0)
        assert tb.clearance(x, THETA) == pytest.approx(-1.0)
        assert tb.contact_force(x, THETA) == pytest.approx(100.0)
        assert tb.safety_margin(x, THETA) == pytest.approx(-20.0)

    def test_grasp_load_channel(self):
        tb = SlotTestbed(c_grasp=1.0, f_grasp_max=80.0)
        x = at(0.0, 200.0, 60.0, 80.0)
        assert tb.safety_margin(x, THETA) == pytest.approx(-20.0)

    def test_broadcasting_matches_loop(self):
        tb = SlotTestbed()
        rng = np.random.default_rng(0)
        xs = np.column_stack([rng.uniform(-60, 60, (3, 5)).ravel(), rng.uniform(-60, 100, 15),
                              np.zeros(15), np.zeros(15)]).reshape(3, 5, 4)
        thetas = np.column_stack([rng.normal(0, 5, 5), rng.normal(48.75, 1, 5)])
        batch = tb.safety_margin(xs, thetas)
        loop = np.array([[tb.safety_margin(xs[i, j], thetas[j]) for j in range(5)] for i in range(3)])
        np.testing.assert_allclose(batch, loop)

    @settings(max_examples=200)
    @given(px=st.floats(-120, 120), py=st.floats(-60, 200), c=st.floats(-20, 20),
           w=st.floats(41, 60))
    def test_margin_is_min_of_channels(self, px, py, c, w):
        tb = SlotTestbed()
        x, th = at(px, py), np.array([c, w])
        a, b, g = tb.margin_channels(x, th)
        assert tb.safety_margin(x, th) == min(a, b, g)
        # contact only when the clearance channel is already violated
        if tb.contact_force(x, th) > 0:
            assert tb.safety_margin(x, th) < 0

    def test_trajectory_margin_is_min(self):
        tb = SlotTestbed()
        states = np.array([at(0, -30), at(0, 100), at(48.75 - 40 + 1, -30)])
        traj = Trajectory(states, np.zeros((2, 2)))
        assert tb.trajectory_margin(traj, THETA) == pytest.approx(-20.0)

    def test_single_state_trajectory(self):
        tb = SlotTestbed()
        traj = Trajectory(at(0, -30)[None], np.zeros((0, 2)))
        assert tb.trajectory_margin(traj, THETA) == pytest.approx(6.75)

    def test_trajectory_shape_check(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((3, 4)), np.zeros((3, 2)))


class TestSuccess:
    def test_at_goal(self):
        tb = SlotTestbed()
        assert tb.success(at(*tb.goal(THETA)), THETA)

    def test_beyond_threshold(self):
        tb = SlotTestbed()
        g = tb.goal(THETA)
        assert not tb.success(at(g[0], g[1] + 61.0), THETA)
        assert tb.success(at(g[0], g[1] + 59.0), THETA)

    def test_stored_block_penetration(self):
        tb = SlotTestbed(stored_block=True)
        assert tb.clearance(at(*tb.goal(THETA)), THETA) < 0
        assert not tb.success(at(*tb.goal(THETA)), THETA)


def test_box_distance_separated_and_overlapping():
    assert box_signed_distance(0, 1, 0, 1, 4, 5, 5, 6) == pytest.approx(5.0)
    assert box_signed_distance(0, 2, 0, 2, 1, 3, 1.5, 3) == pytest.approx(-0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        SlotTestbed(dt=0.0)
    with pytest.raises(ValueError):
        SlotTestbed.from_dict({"bogus": 1})
    tb = SlotTestbed(sigma_v=3.0)
    assert SlotTestbed.from_dict(tb.to_dict()) == tb


class TestInvariants:
    def test_margin_continuity_along_rays(self):
        # margin channels are 1-Lipschitz in position up to the force gain
        tb = SlotTestbed()
        rng = np.random.default_rng(0)
        step = 0.01
        lip = max(1.0, tb.k_contact)
        for _ in range(50):
            start = np.array([rng.uniform(-80, 80), rng.uniform(-60, 120)])
            d = rng.normal(size=2)
            d /= np.linalg.norm(d)
            pts = start + step * np.arange(2000)[:, None] * d
            xs = np.column_stack([pts, np.zeros((2000, 2))])
            h = tb.safety_margin(xs, THETA)
            assert np.max(np.abs(np.diff(h))) <= lip * step + 1e-9

    @settings(max_examples=100)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 10))
    def test_extension_never_raises_margin(self, seed, n):
        tb = SlotTestbed()
        rng = np.random.default_rng(seed)
        traj = tb.simulate(at(rng.uniform(-20, 20), rng.uniform(0, 80)),
                           rng.uniform(-80, 80, size=(n, 2)), THETA, rng=rng)
        longer = Trajectory(np.vstack([traj.states, at(*rng.uniform(-60, 60, 2))]),
                            np.vstack([traj.controls, np.zeros((1, 2))]))
        assert tb.trajectory_margin(longer, THETA) <= tb.trajectory_margin(traj, THETA)

    @staticmethod
    def _interior_grid():
        px, py = np.meshgrid(np.arange(-60.0, 61.0), np.arange(-60.0, 0.0))
        return np.stack([px, py, np.zeros_like(px), np.zeros_like(px)], axis=-1)

    @pytest.mark.parametrize("w", [40.0, 41.0, 41.9])
    def test_infeasible_geometry_has_no_safe_interior(self, w):
        tb = SlotTestbed()
        h = tb.safety_margin(self._interior_grid(), np.array([0.0, w]))
        assert np.all(h < 0.0)

    def test_boundary_geometry_touches_zero_on_centre_line(self):
        # w = r_obj + d_min leaves exactly d_min of clearance at the centre
        tb = SlotTestbed()
        xs = self._interior_grid()
        h = tb.safety_margin(xs, np.array([0.0, tb.r_obj + tb.d_min]))
        assert h.max() == 0.0
        assert np.all(xs[h >= 0.0][:, 0] == 0.0)

    def test_deterministic_without_noise(self):
        tb = SlotTestbed(sigma_w=0.0)
        a = tb.simulate(at(1, 50), np.ones((5, 2)), THETA, rng=np.random.default_rng(0))
        b = tb.simulate(at(1, 50), np.ones((5, 2)), THETA, rng=np.random.default_rng(1))
        np.testing.assert_array_equal(a.states, b.states)
