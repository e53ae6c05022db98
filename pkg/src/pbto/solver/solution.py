"""Continuous-time view of an optimized decision vector."""

from __future__ import annotations

import numpy as np

from ..bezier import basis_matrix
from ..dynamics import TranslationalTrajectory
from ..nlp.layout import DecisionVector, ProblemMode


class TrajectorySolution:
    """Samplers for body, feet and forces of a decision vector.

    In proposed mode the body translation is the analytic superposition of
    gravity and per-leg segments.  In baseline mode it is the cubic Hermite
    interpolant of the node states.  Orientation and angular velocity are
    node values held constant over each interval.
    """

    def __init__(self, xi: DecisionVector, scenario=None):
        self.xi = xi
        self.scenario = sc = scenario if scenario is not None else xi.scenario
        self.mode = sc.mode
        self.mass = sc.robot.mass
        self.gravity = np.asarray(sc.robot.gravity)
        self.T = sc.T_total
        self.node_times = sc.node_times
        self.dt = sc.dt
        self.n_legs = sc.robot.n_legs
        self.R_nodes = xi.rotations()
        self.omega_nodes = np.array(xi.omega, dtype=float)
        self.footholds = xi.footholds(sc.p_init)
        self.durations = np.array(xi.durations, dtype=float)
        self.ends = np.cumsum(self.durations, axis=1)
        if self.mode == ProblemMode.PROPOSED:
            self.translation = TranslationalTrajectory(xi.alpha, xi.durations, xi.chi, xi.chi_dot, sc.x_init,
                                                       sc.xdot_init, sc.robot.mass, sc.robot.gravity)
        else:
            self.translation = None

    # --- time bookkeeping -----------------------------------------------------------

    def _t(self, t):
        return np.atleast_1d(np.asarray(t, dtype=float))

    def phase_of(self, leg: int, t):
        """0-based phase index and local parameter of ``leg`` at times ``t``."""
        t = self._t(t)
        ends = self.ends[leg]
        q = np.minimum(np.searchsorted(ends, t, side="right"), len(ends) - 1)
        start = ends[q] - self.durations[leg, q]
        s = (t - start) / self.durations[leg, q]
        return q, np.clip(s, 0.0, 1.0)

    def in_contact(self, leg: int, t) -> np.ndarray:
        q, _ = self.phase_of(leg, t)
        return q % 2 == 0

    def _node_index(self, t):
        k = np.floor(self._t(t) / self.dt + 1e-9).astype(int)
        return np.clip(k, 0, len(self.node_times) - 2)

    # --- body -----------------------------------------------------------------------

    def _hermite(self, t, order):
        t = self._t(t)
        k = self._node_index(t)
        h = self.dt
        x, v = self.xi.x_nodes, self.xi.v_nodes
        u = ((t - self.node_times[k]) / h)[:, None]
        p0, p1, v0, v1 = x[k], x[k + 1], v[k], v[k + 1]
        if order == 0:
            return ((2 * u**3 - 3 * u**2 + 1) * p0 + (u**3 - 2 * u**2 + u) * h * v0
                    + (-2 * u**3 + 3 * u**2) * p1 + (u**3 - u**2) * h * v1)
        if order == 1:
            return ((6 * u**2 - 6 * u) * p0 / h + (3 * u**2 - 4 * u + 1) * v0
                    + (-6 * u**2 + 6 * u) * p1 / h + (3 * u**2 - 2 * u) * v1)
        return ((12 * u - 6) * p0 / h**2 + (6 * u - 4) * v0 / h
                + (-12 * u + 6) * p1 / h**2 + (6 * u - 2) * v1 / h)

    def position(self, t) -> np.ndarray:
        if self.translation is not None:
            return self.translation.position(self._t(t))
        return self._hermite(t, 0)

    def velocity(self, t) -> np.ndarray:
        if self.translation is not None:
            return self.translation.velocity(self._t(t))
        return self._hermite(t, 1)

    def acceleration(self, t) -> np.ndarray:
        """Second derivative of the position curve itself."""
        if self.translation is not None:
            return self.translation.acceleration_from_position(self._t(t))
        return self._hermite(t, 2)

    def orientation(self, t) -> np.ndarray:
        return self.R_nodes[self._node_index(t)]

    def angular_velocity(self, t) -> np.ndarray:
        return self.omega_nodes[self._node_index(t)]

    def angular_acceleration(self, t) -> np.ndarray:
        k = self._node_index(t)
        return (self.omega_nodes[k + 1] - self.omega_nodes[k]) / self.dt

    # --- feet -----------------------------------------------------------------------

    def force(self, leg: int, t) -> np.ndarray:
        t = self._t(t)
        q, s = self.phase_of(leg, t)
        out = np.zeros(t.shape + (3,))
        alpha = self.xi.alpha[leg]
        for j in np.unique(q):
            if j % 2:
                continue
            m = q == j
            out[m] = basis_matrix(alpha.shape[1] - 1, s[m]) @ alpha[j // 2]
        return out

    def forces(self, t) -> np.ndarray:
        """(n_legs, len(t), 3)."""
        return np.array([self.force(i, t) for i in range(self.n_legs)])

    def foot(self, leg: int, t) -> np.ndarray:
        t = self._t(t)
        q, s = self.phase_of(leg, t)
        out = np.zeros(t.shape + (3,))
        gamma = self.xi.gamma[leg]
        for j in np.unique(q):
            m = q == j
            if j % 2 == 0:
                out[m] = self.footholds[leg, j // 2]
            else:
                out[m] = basis_matrix(gamma.shape[1] - 1, s[m]) @ gamma[j // 2]
        return out

    def feet(self, t) -> np.ndarray:
        return np.array([self.foot(i, t) for i in range(self.n_legs)])

    def contact_flags(self, t) -> np.ndarray:
        return np.array([self.in_contact(i, t) for i in range(self.n_legs)])

    def grid(self, dtau: float) -> np.ndarray:
        n = int(round(self.T / dtau))
        t = np.arange(n + 1) * dtau
        t[-1] = min(t[-1], self.T)
        return t
