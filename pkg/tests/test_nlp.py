import jax.numpy as jnp
import numpy as np
import pytest

from pbto import nlp, scenarios
from pbto.dynamics import exp_so3, is_rotation
from pbto.nlp import NlpError, random_decision
from pbto.nlp.layout import IndexMap


def test_counts_formula(plane_problem, baseline_problem):
    for P in (plane_problem, baseline_problem):
        c = P.counts()
        assert c["n_z"] == c["formula_total"] == P.index_map.size
        assert c["n_ceq"] > 0 and c["n_cineq"] > 0
    f = plane_problem.counts()["formula"]
    assert f == {"forces": 3 * 5 * 4 * 4, "feet": 3 * 5 * 3 * 4, "durations": 28, "orientation": 180,
                 "segment_states": 168}
    assert plane_problem.n_z == 796


def test_index_map_bijective(plane_problem):
    im = plane_problem.index_map
    flat = np.concatenate([im.indices(n).ravel() for n in im.names()])
    np.testing.assert_array_equal(np.sort(flat), np.arange(im.size))
    z = np.random.default_rng(0).normal(size=im.size)
    np.testing.assert_array_equal(im.flatten(im.unflatten(z)), z)


def test_mode_contract(plane_problem, baseline_problem):
    eq_p, eq_b = plane_problem.labels("eq"), baseline_problem.labels("eq")
    assert "translational_dynamics" not in eq_p
    assert "continuity" not in eq_b
    dyn = lambda P: (P.row_labels("eq") == "translational_dynamics").sum()
    assert dyn(baseline_problem) > dyn(plane_problem) == 0
    assert "friction" in plane_problem.labels("in") and "friction_nodes" in baseline_problem.labels("in")


def test_standing_equilibrium(standing):
    P, xi = standing
    ce, ci = P.constraints(xi, jacobians=False)
    assert np.abs(ce).max() < 1e-8
    assert ci.max() <= 0.0


def test_reference_costs_vanish():
    sc = scenarios.standing_scenario(n_nodes=10, T_total=1.0)
    P = nlp.assemble(sc)
    h = P.cost_terms(scenarios.standing_solution(sc))
    assert h["h1"] < 1e-20 and h["h2"] < 1e-20 and h["h3"] == 0.0


def test_h5_collinear_swing(plane_problem):
    xi = scenarios.initial_guess(plane_problem.scenario)
    u = np.linspace(0.0, 1.0, xi.gamma.shape[2])[:, None]
    xi.gamma = np.array([[a[0] + u * (a[-1] - a[0]) for a in leg] for leg in xi.gamma])
    assert plane_problem.cost_terms(xi)["h5"] < 1e-24
    assert plane_problem.cost_terms(xi)["h6"] > 0


def test_chi_locality(plane_problem):
    P = plane_problem
    xi = scenarios.initial_guess(P.scenario)
    before = P.blocks(xi)["continuity"]
    xi.chi[2, 3, 0] += 1e-3
    delta = P.blocks(xi)["continuity"] - before
    moved = np.argwhere(np.abs(delta) > 1e-12)
    assert sorted(map(tuple, moved)) == [(2, 3, 0), (2, 4, 0)]
    assert abs(delta[2, 3, 0]) == pytest.approx(1e-3, abs=1e-12)
    assert abs(delta[2, 4, 0]) == pytest.approx(1e-3, abs=1e-12)


def test_retract(plane_problem):
    P = plane_problem
    xi = random_decision(P, np.random.default_rng(1))
    xi.dtheta[:] = 0.0
    same = P.retract(xi, np.zeros(P.n_z))
    np.testing.assert_array_equal(P.flat(same), P.flat(xi))
    np.testing.assert_allclose(same.R_bar, xi.R_bar, atol=1e-15)
    axis = np.array([0.2, -0.5, 0.3])
    step = np.zeros(P.n_z)
    step[P.index_map.indices("dtheta")[4]] = axis
    twice = P.retract(P.retract(xi, step), step)
    once = P.retract(xi, 2 * step)
    np.testing.assert_allclose(twice.R_bar[4], once.R_bar[4], atol=1e-14)
    np.testing.assert_allclose(once.R_bar[4], xi.R_bar[4] @ exp_so3(2 * axis), atol=1e-14)
    assert np.all(once.dtheta == 0)
    assert all(np.abs(R.T @ R - np.eye(3)).max() < 1e-12 for R in once.R_bar)


def test_nan_is_hard_error(plane_problem):
    xi = scenarios.initial_guess(plane_problem.scenario)
    xi.alpha[0, 0, 0, 0] = np.nan
    with pytest.raises(NlpError):
        plane_problem.residuals(xi)


def test_invalid_scenario_lists_problems():
    sc = scenarios.figure3_scenario(n_phase=6, T_total=-1.0)
    with pytest.raises(scenarios.ScenarioError) as err:
        nlp.assemble(sc)
    assert len(err.value.problems) >= 2


def _scenario_classes():
    out = {"plane-proposed": scenarios.figure3_scenario(), "plane-baseline": scenarios.figure3_scenario(mode="baseline")}
    for terrain in ("block", "stairs", "chimney"):
        out[terrain] = scenarios.batch(scenarios.BatchProtocol(count=1, seed=3, terrain=terrain))[0]
    return out


CLASSES = _scenario_classes()


@pytest.mark.parametrize("name", sorted(CLASSES))
def test_jacobians_against_central_differences(name):
    P = nlp.assemble(CLASSES[name])
    rng = np.random.default_rng(17)
    h = 1e-6
    worst = 0.0
    base = scenarios.initial_guess(P.scenario)
    for _ in range(3):
        xi = random_decision(P, rng, base)
        lin = P.linearize(xi)
        J = np.vstack([lin.J_r, lin.J_eq, lin.J_in])
        z0, Rb = P.flat(xi), jnp.asarray(xi.R_bar)
        f = lambda z: np.asarray(P._values(jnp.asarray(z), Rb, P.params))
        fd = np.empty_like(J)
        for j in range(P.n_z):
            e = np.zeros(P.n_z)
            e[j] = h
            fd[:, j] = (f(z0 + e) - f(z0 - e)) / (2 * h)
        err = np.abs(J - fd).max(axis=1) / np.maximum(np.abs(J).max(axis=1), 1.0)
        worst = max(worst, err.max())
        assert np.all(J[:, ~P.sparsity().any(axis=0)] == 0)
    assert worst < 1e-4


def test_cost_gradients(plane_problem):
    P = plane_problem
    rng = np.random.default_rng(23)
    xi = random_decision(P, rng)
    z0 = P.flat(xi)
    h = 1e-6
    for name in ("h1", "h2", "h3", "h4", "h5", "h6"):
        value, grad = P.cost_term(name, xi)
        assert value == pytest.approx(P.cost_terms(xi)[name], rel=1e-12)
        fd = np.empty(P.n_z)
        for j in range(P.n_z):
            e = np.zeros(P.n_z)
            e[j] = h
            hp = P.cost_terms(P.from_flat(z0 + e, xi.R_bar))[name]
            hm = P.cost_terms(P.from_flat(z0 - e, xi.R_bar))[name]
            fd[j] = (hp - hm) / (2 * h)
        assert np.abs(grad - fd).max() / max(np.abs(grad).max(), 1.0) < 1e-4, name


@pytest.mark.parametrize("mode", ["proposed", "baseline"])
def test_sparsity_contains_jacobian(mode, plane_problem, baseline_problem):
    P = plane_problem if mode == "proposed" else baseline_problem
    pattern = P.sparsity()
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        lin = P.linearize(random_decision(P, rng, scale=1.0 + seed % 3))
        J = np.vstack([lin.J_r, lin.J_eq, lin.J_in])
        assert not np.any((J != 0) & ~pattern)
    assert pattern.mean() < 0.5


def test_friction_control_points_imply_sampled_feasibility(plane_problem):
    from pbto.bezier import BezierSegment
    from pbto.model import pyramid_rows

    P = plane_problem
    xi = scenarios.initial_guess(P.scenario)
    rows = P.blocks(xi)["friction"]
    assert rows.max() <= 0
    frames = scenarios.leg_frames(P.scenario)
    rng = np.random.default_rng(0)
    for i in range(4):
        A, b = pyramid_rows(*frames[i], P.scenario.terrain.mu, P.scenario.robot.f_n_max)
        for j in range(xi.alpha.shape[1]):
            f = BezierSegment(xi.alpha[i, j])(rng.uniform(0, 1, 1000))
            assert np.all(f @ A.T - b <= 1e-9)


def test_leg_relabeling_symmetry():
    sc = scenarios.standing_scenario(n_nodes=10, T_total=1.0, n_phase=3, init_durations=[0.3, 0.4, 0.3])
    P = nlp.assemble(sc)
    xi = random_decision(P, np.random.default_rng(5), scale=0.3)
    xi.durations = np.tile(xi.durations[0], (4, 1))
    # mirror left and right legs about the sagittal plane
    perm = [1, 0, 3, 2]
    flip = np.array([1.0, -1.0, 1.0])
    mirrored = xi.copy()
    for name in ("alpha", "gamma", "chi", "chi_dot"):
        setattr(mirrored, name, getattr(xi, name)[perm] * flip)
    mirrored.durations = xi.durations[perm]
    S = np.diag(flip)
    mirrored.R_bar = np.array([S @ R @ S for R in xi.R_bar])
    mirrored.omega = xi.omega * -flip
    mirrored.dtheta = xi.dtheta * -flip
    assert P.cost(mirrored) == pytest.approx(P.cost(xi), rel=1e-10)
    _, ce, ci = P.residuals(xi)
    _, ce_m, ci_m = P.residuals(mirrored)
    np.testing.assert_allclose(np.sort(np.abs(ce_m)), np.sort(np.abs(ce)), atol=1e-9)
    np.testing.assert_allclose(np.sort(ci_m), np.sort(ci), atol=1e-9)
