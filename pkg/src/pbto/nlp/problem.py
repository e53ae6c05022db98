"""The assembled nonlinear program over a scenario."""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from ..dynamics import exp_so3, is_rotation
from .. import scenarios as _scn
from . import functions as fn
from .layout import Dimensions, DecisionVector, IndexMap, ProblemMode

SPARSITY_PROBES = 3


class NlpError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockInfo:
    name: str
    shape: tuple
    start: int
    stop: int


def _catalogue(blocks, start=0):
    out = []
    for name, shape in blocks:
        size = int(np.prod(shape))
        out.append(BlockInfo(name, tuple(shape), start, start + size))
        start += size
    return out, start


@dataclass
class Linearization:
    r: np.ndarray
    J_r: np.ndarray
    c_eq: np.ndarray
    J_eq: np.ndarray
    c_in: np.ndarray
    J_in: np.ndarray

    @property
    def cost(self) -> float:
        return float(self.r @ self.r)


class Problem:
    """Costs, constraints and first derivatives for one scenario.

    Residual vectors are stacked as weighted cost residuals ``r`` (so that
    ``h = r.r``), equalities ``c_eq = 0`` and inequalities ``c_in <= 0``.
    """

    def __init__(self, scenario):
        self.scenario = scenario.check()
        sc = scenario
        self.dims = Dimensions(sc.robot.n_legs, sc.n_phase, sc.n_nodes, sc.degree_feet, sc.degree_force, sc.mode)
        self.mode = sc.mode
        self.index_map = IndexMap(self.dims)
        self.cost_blocks, n_r = _catalogue(fn.cost_block_shapes(self.dims))
        self.eq_blocks, n_eq = _catalogue(fn.eq_block_shapes(self.dims))
        self.in_blocks, n_in = _catalogue(fn.ineq_block_shapes(self.dims))
        self.n_r, self.n_eq, self.n_in = n_r, n_eq, n_in
        self.n_z = self.index_map.size
        self.params = self._params()
        n_steps = sc.terrain.n_steps if sc.terrain.kind == "stairs" else 0
        self._values, self._with_jac, self._blocks = fn.compiled(self.dims, sc.terrain.kind, n_steps)
        self._sparsity = None

    # --- parameters ------------------------------------------------------------------

    def _params(self):
        sc = self.scenario
        robot, terrain = sc.robot, sc.terrain
        t = sc.node_times
        z_ref, R_ref = _scn.reference_at(sc, t)
        w = sc.weights.as_array()
        tp = {
            "step_x": terrain.step_x, "step_height": terrain.step_height, "step_length": terrain.step_length,
            "tan_incline": np.tan(terrain.wall_incline), "half_gap": terrain.half_gap,
        }
        if terrain.kind == "custom-heightfield":
            tp.update(heights=terrain.heights, origin=np.asarray(terrain.origin, dtype=float),
                      resolution=terrain.resolution)
        P = {
            "t_nodes": t, "dt": sc.dt, "mass": robot.mass, "g": robot.gravity, "inertia": robot.inertia,
            "inertia_inv": np.linalg.inv(robot.inertia), "x_init": sc.x_init, "v_init": sc.xdot_init,
            "x_final": sc.x_final, "v_final": sc.xdot_final, "R_init": sc.R_init, "R_final": sc.R_final,
            "w_init": sc.omega_init, "w_final": sc.omega_final, "p_init": sc.p_init, "T_total": sc.T_total,
            "z_ref": z_ref, "R_ref": R_ref, "p_ref": robot.nominal_feet, "hips": robot.hip_offsets,
            "leg_length": robot.leg_length, "fmax": robot.f_n_max, "mu": terrain.mu, "frames": _scn.leg_frames(sc),
            "dt_min": sc.dt_min, "sqrt_w": np.sqrt(w), "terrain": tp,
        }
        return _to_jax(P)

    # --- conversions ----------------------------------------------------------------

    def flat(self, xi: DecisionVector) -> np.ndarray:
        return xi.flat(self.index_map)

    def from_flat(self, z, R_bar) -> DecisionVector:
        return DecisionVector.from_flat(z, R_bar, self.index_map, scenario=self.scenario)

    def _args(self, xi: DecisionVector):
        return jnp.asarray(self.flat(xi)), jnp.asarray(xi.R_bar)

    def _split(self, v):
        return v[:self.n_r], v[self.n_r:self.n_r + self.n_eq], v[self.n_r + self.n_eq:]

    # --- evaluation -----------------------------------------------------------------

    def blocks(self, xi: DecisionVector) -> dict:
        """Every named residual block (costs unweighted) as numpy arrays."""
        out = self._blocks(*self._args(xi), self.params)
        return {k: np.asarray(v) for k, v in out.items()}

    def residuals(self, xi: DecisionVector):
        v = np.asarray(self._values(*self._args(xi), self.params))
        self._check_finite(v)
        return self._split(v)

    def linearize(self, xi: DecisionVector) -> Linearization:
        v, J = self._with_jac(*self._args(xi), self.params)
        v, J = np.asarray(v), np.asarray(J)
        self._check_finite(v)
        r, ce, ci = self._split(v)
        Jr, Je, Ji = self._split(J)
        return Linearization(r, Jr, ce, Je, ci, Ji)

    @staticmethod
    def _check_finite(v):
        if not np.all(np.isfinite(v)):
            raise NlpError("NaN or infinite value in problem residuals")

    def cost(self, xi: DecisionVector) -> float:
        r, _, _ = self.residuals(xi)
        return float(r @ r)

    def cost_terms(self, xi: DecisionVector) -> dict:
        """Unweighted ``h_e`` values; the objective is ``sum(w_e * h_e)``."""
        b = self.blocks(xi)
        return {name: float(np.sum(b[name] ** 2)) for name in fn.COST_BLOCKS}

    def cost_term(self, name: str, xi: DecisionVector):
        """Value and gradient (w.r.t. the flat vector) of one unweighted cost term."""
        info = next(b for b in self.cost_blocks if b.name == name)
        lin = self.linearize(xi)
        k = fn.COST_BLOCKS.index(name)
        sw = self.scenario.weights.as_array()[k] ** 0.5
        if sw == 0:
            raise NlpError(f"cost {name} has zero weight; its gradient is not tracked")
        r = lin.r[info.start:info.stop] / sw
        J = lin.J_r[info.start:info.stop] / sw
        return float(r @ r), 2.0 * J.T @ r

    def constraints(self, xi: DecisionVector, jacobians: bool = True):
        if not jacobians:
            _, ce, ci = self.residuals(xi)
            return ce, ci
        lin = self.linearize(xi)
        return lin.c_eq, lin.c_in, lin.J_eq, lin.J_in

    def phi(self, xi: DecisionVector):
        _, ce, ci = self.residuals(xi)
        return phi_values(ce, ci)

    # --- structure ------------------------------------------------------------------

    def labels(self, kind: str = "eq") -> list[str]:
        blocks = {"eq": self.eq_blocks, "in": self.in_blocks, "cost": self.cost_blocks}[kind]
        return [b.name for b in blocks]

    def row_labels(self, kind: str = "eq") -> np.ndarray:
        blocks = {"eq": self.eq_blocks, "in": self.in_blocks, "cost": self.cost_blocks}[kind]
        return np.concatenate([np.full(b.stop - b.start, b.name, dtype=object) for b in blocks])

    def block(self, kind: str, name: str) -> BlockInfo:
        blocks = {"eq": self.eq_blocks, "in": self.in_blocks, "cost": self.cost_blocks}[kind]
        for b in blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def counts(self) -> dict:
        d = self.dims
        formula = {
            "forces": 3 * (d.degree_force + 1) * d.n_stance * d.n_legs,
            "feet": 3 * (d.degree_feet + 1) * d.n_swing * d.n_legs,
            "durations": d.n_phase * d.n_legs,
            "orientation": 6 * d.n_nodes,
        }
        if self.mode == ProblemMode.PROPOSED:
            formula["segment_states"] = 6 * d.n_phase * d.n_legs
        else:
            formula["node_states"] = 6 * d.n_nodes
        return {"n_z": self.n_z, "n_ceq": self.n_eq, "n_cineq": self.n_in, "n_cost": self.n_r,
                "formula": formula, "formula_total": sum(formula.values())}

    def bounds(self):
        """Simple variable bounds (durations only; everything else is free)."""
        lo = np.full(self.n_z, -np.inf)
        hi = np.full(self.n_z, np.inf)
        sl = self.index_map.slice("durations")
        lo[sl] = self.scenario.dt_min
        hi[sl] = self.scenario.T_total
        return lo, hi

    def sparsity(self) -> np.ndarray:
        """Boolean pattern of ``[J_r; J_eq; J_in]``.

        Which segment is active at a node depends on the durations, so the
        pattern is the union over random probes and stance-heavy and
        swing-heavy schedules, widened to whole per-leg variable blocks.
        """
        if self._sparsity is None:
            rng = np.random.default_rng(12345)
            base = _scn.initial_guess(self.scenario)
            probes = [random_decision(self, rng, base) for _ in range(SPARSITY_PROBES)]
            sc = self.scenario
            stance = np.arange(sc.n_phase) % 2 == 0
            for heavy in (stance, ~stance):
                if not heavy.any() or heavy.all():
                    continue
                xi = random_decision(self, rng, base)
                short = 2.0 * sc.dt_min
                d = np.where(heavy, (sc.T_total - short * (~heavy).sum()) / heavy.sum(), short)
                # stretched past T_total, as unconverged iterates may be
                xi.durations = np.tile(1.05 * d, (sc.robot.n_legs, 1))
                probes.append(xi)
            pattern = np.zeros((self.n_r + self.n_eq + self.n_in, self.n_z), dtype=bool)
            for xi in probes:
                lin = self.linearize(xi)
                pattern |= np.vstack([lin.J_r, lin.J_eq, lin.J_in]) != 0
            for name in self.index_map.names():
                idx = self.index_map.indices(name)
                if name in ("dtheta", "omega", "x_nodes", "v_nodes"):
                    continue
                for leg_cols in idx.reshape(idx.shape[0], -1):
                    rows = pattern[:, leg_cols].any(axis=1)
                    pattern[np.ix_(rows, leg_cols)] = True
            self._sparsity = pattern
        return self._sparsity

    # --- updates --------------------------------------------------------------------

    def retract(self, xi: DecisionVector, step) -> DecisionVector:
        step = np.asarray(step, dtype=float)
        if step.shape != (self.n_z,):
            raise NlpError(f"step must have length {self.n_z}")
        z = self.flat(xi) + step
        new = self.from_flat(z, xi.R_bar)
        new.R_bar = np.array([Rb @ exp_so3(d) for Rb, d in zip(xi.R_bar, new.dtheta)])
        new.dtheta = np.zeros_like(new.dtheta)
        return new


def assemble(scenario) -> Problem:
    """Validate ``scenario`` and build its nonlinear program."""
    problems = scenario.validate()
    if problems:
        raise _scn.ScenarioError(problems)
    return Problem(scenario)


def phi_values(c_eq, c_in):
    """Mean l1 equality violation and mean positive-part inequality violation."""
    c_eq = np.asarray(c_eq, dtype=float)
    c_in = np.asarray(c_in, dtype=float)
    phi_eq = float(np.abs(c_eq).sum() / c_eq.size) if c_eq.size else 0.0
    phi_in = float(np.maximum(c_in, 0.0).sum() / c_in.size) if c_in.size else 0.0
    return phi_eq, phi_in


def random_decision(problem: Problem, rng: np.random.Generator, base: DecisionVector | None = None,
                    scale: float = 1.0) -> DecisionVector:
    """A random decision vector near ``base`` with strictly positive durations."""
    if base is None:
        base = _scn.initial_guess(problem.scenario)
    xi = base.copy()
    sc = problem.scenario
    m_g = sc.robot.weight / sc.robot.n_legs
    xi.alpha = xi.alpha + scale * rng.normal(0.0, 0.2 * m_g, xi.alpha.shape)
    xi.gamma = xi.gamma + scale * rng.normal(0.0, 0.05, xi.gamma.shape)
    d = xi.durations * np.exp(scale * rng.normal(0.0, 0.2, xi.durations.shape))
    xi.durations = d
    xi.dtheta = scale * rng.normal(0.0, 0.1, xi.dtheta.shape)
    xi.omega = scale * rng.normal(0.0, 0.3, xi.omega.shape)
    R = [Rb @ exp_so3(rng.normal(0.0, 0.2 * scale, 3)) for Rb in xi.R_bar]
    xi.R_bar = np.array(R)
    assert all(is_rotation(r) for r in xi.R_bar)
    if xi.chi is not None:
        xi.chi = xi.chi + scale * rng.normal(0.0, 0.02, xi.chi.shape)
        xi.chi_dot = xi.chi_dot + scale * rng.normal(0.0, 0.1, xi.chi_dot.shape)
    if xi.x_nodes is not None:
        xi.x_nodes = xi.x_nodes + scale * rng.normal(0.0, 0.05, xi.x_nodes.shape)
        xi.v_nodes = xi.v_nodes + scale * rng.normal(0.0, 0.1, xi.v_nodes.shape)
    return xi


def _to_jax(tree):
    if isinstance(tree, dict):
        return {k: _to_jax(v) for k, v in tree.items()}
    return jnp.asarray(np.asarray(tree, dtype=float))
