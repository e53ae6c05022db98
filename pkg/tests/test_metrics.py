import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbto import metrics, scenarios
from pbto.dynamics import exp_so3
from pbto.model import pyramid_rows
from pbto.solver import TrajectorySolution


class StubTrajectory:
    """Minimal trajectory with hand-chosen position, forces and rotation."""

    def __init__(self, scenario, position=None, force=None, omega=np.zeros(3), R=np.eye(3), contact=True):
        self.scenario = scenario
        self.T = scenario.T_total
        self.mass = scenario.robot.mass
        self.gravity = np.asarray(scenario.robot.gravity)
        self.n_legs = scenario.robot.n_legs
        self._pos = position or (lambda t: np.tile(scenario.x_init, (len(t), 1)))
        self._force = force or (lambda leg, t: np.zeros((len(t), 3)))
        self._omega = np.asarray(omega, dtype=float)
        self._R = np.asarray(R, dtype=float)
        self._contact = contact

    def position(self, t):
        return self._pos(np.atleast_1d(t))

    def acceleration(self, t):
        t = np.atleast_1d(t)
        return metrics.numeric_second_derivative(self.position(t), t)

    def force(self, leg, t):
        return self._force(leg, np.atleast_1d(t))

    def forces(self, t):
        return np.array([self.force(i, t) for i in range(self.n_legs)])

    def feet(self, t):
        t = np.atleast_1d(t)
        return np.repeat(np.asarray(self.scenario.p_init)[:, None, :], len(t), axis=1)

    def in_contact(self, leg, t):
        return np.full(np.atleast_1d(t).shape, self._contact)

    def orientation(self, t):
        return np.repeat(self._R[None], len(np.atleast_1d(t)), axis=0)

    def angular_velocity(self, t):
        return np.repeat(self._omega[None], len(np.atleast_1d(t)), axis=0)

    def angular_acceleration(self, t):
        return np.zeros((len(np.atleast_1d(t)), 3))


@pytest.fixture(scope="module")
def one_second():
    return scenarios.standing_scenario(T_total=1.0, n_nodes=10)


def enumerate_projection(f, A, b):
    """Exact distance to a polyhedron by trying every face, edge and vertex affine hull."""
    if np.all(A @ f <= b + 1e-12):
        return 0.0
    best = np.inf
    for k in (1, 2, 3):
        for S in itertools.combinations(range(len(b)), k):
            As, bs = A[list(S)], b[list(S)]
            if np.linalg.matrix_rank(As) < k:
                continue
            lam = np.linalg.solve(As @ As.T, As @ f - bs)
            y = f - As.T @ lam
            if np.all(A @ y <= b + 1e-9):
                best = min(best, np.linalg.norm(y - f))
    return best


# --- grid ---------------------------------------------------------------------------


def test_time_grid_closes_on_T():
    assert np.allclose(metrics.time_grid(1.0, 0.25), [0, 0.25, 0.5, 0.75, 1.0])
    t = metrics.time_grid(1.0, 0.3)
    assert t[-1] == 1.0 and np.allclose(t[:-1], [0, 0.3, 0.6, 0.9])


@pytest.mark.parametrize("dtau", [0.0, -0.01])
def test_nonpositive_dtau_rejected(one_second, dtau):
    with pytest.raises(metrics.MetricsDomainError):
        metrics.time_grid(1.0, dtau)
    with pytest.raises(metrics.MetricsDomainError):
        metrics.evaluate(StubTrajectory(one_second), dtau)


def test_second_difference_exact_on_quadratics():
    t = np.sort(np.random.default_rng(3).uniform(0, 2, 40))
    x = np.stack([3 * t**2 - t, -t**2, 0.5 * t**2 + 2], axis=1)
    assert np.allclose(metrics.numeric_second_derivative(x, t), [6.0, -2.0, 1.0], atol=1e-8)


# --- TD -----------------------------------------------------------------------------


@pytest.mark.parametrize("method", ["analytic", "numeric"])
def test_ballistic_forces_zeroed_gives_weight(one_second, method):
    # body held still, forces removed: the residual is the weight itself
    sol = StubTrajectory(one_second)
    td = metrics.td_violation(sol, 0.01, method)
    assert np.allclose(td, np.abs(sol.mass * sol.gravity), atol=1e-9)


def test_free_fall_with_zero_forces_has_no_td(one_second):
    g = np.asarray(one_second.robot.gravity)
    sol = StubTrajectory(one_second, position=lambda t: one_second.x_init + 0.5 * t[:, None] ** 2 * g)
    assert np.all(metrics.td_violation(sol, 0.01, "numeric") < 1e-9)


def test_unknown_td_method(one_second):
    with pytest.raises(metrics.MetricsDomainError):
        metrics.td_violation(StubTrajectory(one_second), 0.01, "spline")


# --- AD -----------------------------------------------------------------------------


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_torque_free_single_axis_spin(one_second, axis):
    w = np.zeros(3)
    w[axis] = 2.5
    R = exp_so3([0.3, -0.2, 0.7])
    sol = StubTrajectory(one_second, omega=w, R=R)
    assert np.all(metrics.ad_violation(sol, 0.01) == 0.0)


def test_off_axis_spin_has_gyroscopic_residual(one_second):
    I = one_second.robot.inertia
    w = np.array([1.0, 1.0, 0.0])
    sol = StubTrajectory(one_second, omega=w)
    assert np.allclose(metrics.ad_violation(sol, 0.01), np.abs(np.cross(w, I @ w)))


# --- FC -----------------------------------------------------------------------------


def test_point_below_apex_is_one_newton(one_second):
    sol = StubTrajectory(one_second, force=lambda leg, t: np.tile([0.0, 0.0, -1.0], (len(t), 1)))
    for leg in range(4):
        v, never = metrics.fc_violation(sol, leg, 0.01)
        assert not never
        assert v == pytest.approx(1.0, abs=1e-8)


def test_force_inside_pyramid_is_zero(one_second):
    sol = StubTrajectory(one_second, force=lambda leg, t: np.tile([10.0, -5.0, 100.0], (len(t), 1)))
    assert all(metrics.fc_violation(sol, leg, 0.01)[0] == 0.0 for leg in range(4))


def test_never_in_stance_flagged(one_second):
    sol = StubTrajectory(one_second, force=lambda leg, t: np.tile([0.0, 0.0, -1.0], (len(t), 1)), contact=False)
    assert metrics.fc_violation(sol, 0, 0.01) == (0.0, True)
    assert metrics.evaluate(sol, 0.01).never_in_stance == [0, 1, 2, 3]


def test_projection_matches_enumeration_oracle(rng):
    n, t1, t2 = np.eye(3)[[2, 0, 1]]
    for trial in range(200):
        R = exp_so3(rng.normal(size=3) * 0.4)
        mu = rng.uniform(0.3, 1.2)
        A, b = pyramid_rows(R @ n, R @ t1, R @ t2, mu, 500.0)
        f = rng.normal(size=3) * rng.choice([5.0, 100.0, 800.0])
        assert metrics.pyramid_distance(f, A, b) == pytest.approx(enumerate_projection(f, A, b), abs=1e-4)


def test_projection_bounded_by_dense_samples(rng):
    # no sampled member of the pyramid is closer than the projection
    A, b = pyramid_rows(np.array([0, 0, 1.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 0.8, 500.0)
    fz = rng.uniform(0, 500, 4000)
    u, v = rng.uniform(-1, 1, (2, 4000))
    pts = np.stack([0.8 * fz * u, 0.8 * fz * v, fz], axis=1)
    pts = pts[np.all(A @ pts.T <= b[:, None] + 1e-9, axis=0)]
    for f in rng.normal(size=(20, 3)) * 300:
        d = metrics.pyramid_distance(f, A, b)
        assert d <= np.linalg.norm(pts - f, axis=1).min() + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.floats(0.2, 1.5))
def test_projection_distance_property(f, mu):
    A, b = pyramid_rows(np.array([0, 0, 1.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), mu, 500.0)
    f = np.array(f)
    d = metrics.pyramid_distance(f, A, b)
    assert d >= 0
    assert d == pytest.approx(enumerate_projection(f, A, b), abs=1e-4)


# --- end to end ---------------------------------------------------------------------


def test_standing_solution_metrics(standing):
    P, xi = standing
    rep = metrics.evaluate(TrajectorySolution(xi), 0.01)
    assert np.all(rep.td < 1e-9)
    assert np.all(rep.fc == 0.0)
    assert np.all(rep.ad < 1e-6)
    row = rep.row()
    assert list(row) == metrics.summary_fields()[3:-2]


def test_grid_refinement_on_initial_guess():
    sol = TrajectorySolution(scenarios.initial_guess(scenarios.figure3_scenario()))
    coarse = metrics.evaluate(sol, 0.01)
    fine = metrics.evaluate(sol, 0.005)
    for a, b in ((coarse.td, fine.td), (coarse.fc, fine.fc)):
        assert np.all(np.abs(a - b) <= 0.01 * np.maximum(np.abs(b), 1e-9))


def test_summary_row_format(tmp_path, standing):
    P, xi = standing
    rep = metrics.evaluate(TrajectorySolution(xi), 0.01)
    row = metrics.summary_row(xi.scenario, rep, "converged", 2)
    metrics.write_summary(tmp_path / "s.csv", [row])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",") == metrics.summary_fields()
    assert lines[1].endswith("converged,2")
    assert metrics.fmt(0.1) == "0.10000000000000001"
