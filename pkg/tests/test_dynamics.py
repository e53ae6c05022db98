import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbto.dynamics import (DynamicsDomainError, TranslationalTrajectory, angular_step, body_position, exp_so3,
                           gravity_solution, hat, is_rotation, log_so3, rollout, stance_segment, swing_segment,
                           vee)
from pbto.metrics import numeric_second_derivative
from pbto.model import RobotModel
from pbto.scenarios import figure3_scenario, initial_guess

G = np.array([0.0, 0.0, -9.81])


def test_gravity_solution():
    np.testing.assert_allclose(gravity_solution(np.zeros(3), np.zeros(3), 1.0), [0, 0, -4.905])
    np.testing.assert_allclose(gravity_solution([1, 2, 3], [4, 5, 6], 0.0), [1, 2, 3])
    np.testing.assert_allclose(gravity_solution(np.zeros(3), [1, 0, 0], 2.0), [2, 0, -19.62])
    with pytest.raises(DynamicsDomainError):
        gravity_solution(np.zeros(3), np.zeros(3), -1.0)


def test_swing_segment():
    np.testing.assert_allclose(swing_segment([1, 0, 0], [0, 1, 0], 2.5, 2.0), [1, 0.5, 0])
    np.testing.assert_allclose(swing_segment([1, 2, 3], np.zeros(3), 9.0, 1.0), [1, 2, 3])


def test_stance_segment():
    chi, chi_dot = np.array([0.1, 0.2, 0.3]), np.array([1.0, 0.0, -1.0])
    line = stance_segment(np.zeros((5, 3)), chi, chi_dot, 0.6, 43.0)
    for tau in np.linspace(0, 0.6, 7):
        np.testing.assert_allclose(line.at_time(tau), swing_segment(chi, chi_dot, tau, 0.0), atol=1e-13)
    m, g, T = 43.0, 9.81, 0.7
    seg = stance_segment(np.tile([0, 0, m * g], (5, 1)), np.zeros(3), np.zeros(3), T, m)
    assert seg.control_points[-1, 2] == pytest.approx(g * T**2 / 2, rel=1e-12)
    alpha = np.random.default_rng(0).normal(0, 50, (5, 3))
    acc = stance_segment(alpha, chi, chi_dot, T, m).derivative().derivative()
    np.testing.assert_allclose(m * acc.control_points, alpha, atol=1e-9)
    with pytest.raises(DynamicsDomainError):
        stance_segment(alpha, chi, chi_dot, 0.0, m)


def continuous(alpha, durations, x0, v0, mass):
    """Segment initial states chained so that every junction is C1."""
    L, n_ph = durations.shape
    chi, chi_dot = np.zeros((L, n_ph, 3)), np.zeros((L, n_ph, 3))
    for q in range(1, n_ph):
        traj = TranslationalTrajectory(alpha, durations, chi, chi_dot, x0, v0, mass)
        for i in range(L):
            p, v = traj.legs[i][q - 1].end_state()
            chi[i, q], chi_dot[i, q] = p.reshape(3), v.reshape(3)
    return TranslationalTrajectory(alpha, durations, chi, chi_dot, x0, v0, mass)


def random_trajectory(rng, legs_active=(0, 1, 2, 3)):
    durations = rng.dirichlet(np.full(7, 5.0), size=4) * 3.0
    alpha = rng.normal(100, 40, (4, 4, 5, 3))
    mask = np.zeros((4, 1, 1, 1))
    mask[list(legs_active)] = 1.0
    return continuous(alpha * mask, durations, np.array([0, 0, 0.5]), np.array([0.2, 0, 0]), 43.0), durations


def test_translational_exactness():
    rng = np.random.default_rng(1)
    traj, durations = random_trajectory(rng)
    np.testing.assert_allclose(traj.continuity_defects()[:, 1:], 0.0, atol=1e-8)
    t = rng.uniform(0, 3.0, 300)
    total = sum(traj.forces(i, t) for i in range(4))
    # second derivative of the position curves against the force curves
    td = 43.0 * traj.acceleration_from_position(t) - 43.0 * G - total
    assert np.abs(td).max() < 1e-8


def test_translational_matches_numeric_differentiation():
    rng = np.random.default_rng(2)
    traj, durations = random_trajectory(rng)
    h = 1e-3
    bounds = np.cumsum(durations, axis=1).ravel()
    t = rng.uniform(0.01, 2.99, 300)
    t = t[np.min(np.abs(t[:, None] - bounds[None]), axis=1) > 2 * h]
    worst = 0.0
    for tk in t:
        grid = np.array([tk - h, tk, tk + h])
        acc = numeric_second_derivative(traj.position(grid), grid)[1]
        worst = max(worst, np.abs(43.0 * acc - 43.0 * traj.acceleration(tk)[0]).max())
    # central differences carry an O(h^2) truncation error
    assert worst < 1e-2


def test_superposition():
    rng = np.random.default_rng(3)
    state = rng.bit_generator.state
    both, _ = random_trajectory(rng, (0, 1))
    rng.bit_generator.state = state
    a, _ = random_trajectory(rng, (0,))
    rng.bit_generator.state = state
    b, _ = random_trajectory(rng, (1,))
    t = np.linspace(0, 3, 101)
    ballistic = gravity_solution(both.x_init, both.v_init, t)
    np.testing.assert_allclose(both.position(t), a.position(t) + b.position(t) - ballistic, atol=1e-10)


def test_body_position():
    sc = figure3_scenario()
    xi = initial_guess(sc)
    x, v, _ = body_position(xi, 0.0)
    np.testing.assert_allclose(x[0], sc.x_init, atol=1e-14)
    np.testing.assert_allclose(v[0], sc.xdot_init, atol=1e-14)
    xi.alpha[:] = 0.0
    xi.chi[:] = 0.0
    xi.chi_dot[:] = 0.0
    t = np.linspace(0, 3, 13)
    np.testing.assert_allclose(body_position(xi, t)[0], gravity_solution(sc.x_init, sc.xdot_init, t), atol=1e-12)
    with pytest.raises(DynamicsDomainError):
        body_position(xi, 3.5)


def test_so3_examples():
    np.testing.assert_allclose(exp_so3([0, 0, np.pi / 2]), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    np.testing.assert_array_equal(exp_so3(np.zeros(3)), np.eye(3))
    v = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(vee(hat(v)), v)
    with pytest.raises(DynamicsDomainError):
        log_so3(np.diag([1.0, 1.0, -1.0]))


def test_exp_log_round_trip():
    rng = np.random.default_rng(9)
    axes = rng.normal(size=(1000, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0, np.pi - 0.1, 1000)
    err = max(np.abs(log_so3(exp_so3(a * ax)) - a * ax).max() for a, ax in zip(angles, axes))
    assert err < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e-5, 1e-5), min_size=3, max_size=3))
def test_small_angle_branch(phi):
    phi = np.array(phi)
    R = exp_so3(phi)
    assert is_rotation(R, 1e-14)
    np.testing.assert_allclose(log_so3(R), phi, atol=1e-15)


def test_near_pi():
    phi = (np.pi - 1e-6) * np.array([0.0, 0.6, 0.8])
    np.testing.assert_allclose(log_so3(exp_so3(phi)), phi, atol=1e-8)


def test_angular_step_examples():
    model = RobotModel()
    zero = np.zeros((4, 3))
    R, w = angular_step(np.eye(3), np.zeros(3), zero, zero, np.zeros(3), model, 0.1)
    np.testing.assert_array_equal(R, np.eye(3))
    np.testing.assert_array_equal(w, np.zeros(3))
    R, w = angular_step(np.eye(3), np.array([0, 0, 1.0]), zero, zero, np.zeros(3), model, 0.1)
    np.testing.assert_allclose(R, exp_so3([0, 0, 0.1]), atol=1e-15)
    np.testing.assert_allclose(w, [0, 0, 1.0], atol=1e-15)


def test_forces_through_com_only_gyroscopic():
    model = RobotModel()
    rng = np.random.default_rng(5)
    x = np.array([0.1, 0.2, 0.5])
    feet = x + rng.normal(size=(4, 3))
    forces = (feet - x) * rng.uniform(1, 50, (4, 1))
    R0 = exp_so3(rng.normal(size=3))
    w0 = rng.normal(size=3)
    _, w = angular_step(R0, w0, feet, forces, x, model, 0.01)
    I = model.inertia
    np.testing.assert_allclose(w - w0, -np.linalg.solve(I, np.cross(w0, I @ w0)) * 0.01, atol=1e-12)


def test_chained_steps_stay_orthonormal():
    model = RobotModel()
    rng = np.random.default_rng(6)
    R, w = np.eye(3), rng.normal(size=3)
    feet = rng.normal(size=(4, 3))
    for _ in range(1000):
        R, w = angular_step(R, w, feet, rng.normal(0, 20, (4, 3)), np.zeros(3), model, 0.01)
        w = np.clip(w, -10, 10)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
    Rs, _ = rollout(np.eye(3), np.array([0.5, -0.2, 1.0]), lambda k: np.zeros(3), model, 0.01, 1000)
    assert max(np.abs(Q.T @ Q - np.eye(3)).max() for Q in Rs) < 1e-9


def test_euler_first_order():
    model = RobotModel()
    T = 1.0

    def final_omega(n):
        dt = T / n
        _, ws = rollout(np.eye(3), np.array([0.2, 0.1, 0.3]),
                        lambda k: np.array([np.sin(k * dt), np.cos(2 * k * dt), 0.5]), model, dt, n)
        return ws[-1]

    ref = final_omega(2 ** 15)
    e1 = np.linalg.norm(final_omega(100) - ref)
    e2 = np.linalg.norm(final_omega(200) - ref)
    assert 1.7 <= e1 / e2 <= 2.3
