"""Single-rigid-body dynamics.

Translational motion is linear, so the body position splits into a ballistic
part driven by gravity and the initial state plus one particular solution per
leg.  Each leg's particular solution is a chain of segments that follow the
leg's own phase schedule: a Bezier segment obtained by double integration of
the stance force, or a straight line during swing.  Orientation is integrated
on SO(3) at uniformly spaced nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bezier import BezierSegment, basis_matrix, integrate_accel

GRAVITY = np.array([0.0, 0.0, -9.81])
SMALL_ANGLE = 1e-6
REORTHONORMALIZE_EVERY = 100


class DynamicsDomainError(ValueError):
    pass


# --- SO(3) -------------------------------------------------------------------


def hat(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def exp_so3(phi) -> np.ndarray:
    """Rodrigues' formula, with a Taylor expansion for tiny angles."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = hat(phi)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * (K @ K)


def is_rotation(R, tol=1e-6) -> bool:
    R = np.asarray(R, dtype=float)
    return R.shape == (3, 3) and np.allclose(R.T @ R, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1.0) < tol


def log_so3(R) -> np.ndarray:
    """Rotation vector of ``R``; the inverse of :func:`exp_so3` for angles below pi."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R):
        raise DynamicsDomainError("log_so3 needs a proper rotation matrix")
    v = 0.5 * vee(R - R.T)
    s = np.linalg.norm(v)
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    theta = np.arctan2(s, c)
    if theta < SMALL_ANGLE:
        return (1.0 + theta**2 / 6.0) * v
    if np.pi - theta < 1e-4:
        # sin(theta) ~ 0: recover the axis from the symmetric part
        B = 0.5 * (R + R.T) - c * np.eye(3)
        k = int(np.argmax(np.diag(B)))
        axis = B[k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if axis @ v < 0:
            axis = -axis
        return theta * axis
    return theta / s * v


def project_to_so3(R) -> np.ndarray:
    """Nearest rotation matrix (polar projection)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def angular_step(R_k, omega_k, feet, forces, x, model, dt):
    """One explicit step of the discretized rotational dynamics.

    ``R_{k+1} = R_k Exp(omega_k dt)`` and ``omega_{k+1}`` is an Euler step of
    Euler's equation with the world-frame GRF torque about ``x`` mapped into
    the body frame.
    """
    feet = np.atleast_2d(feet)
    forces = np.atleast_2d(forces)
    torque = np.cross(feet - x, forces).sum(axis=0)
    I = model.inertia
    rhs = R_k.T @ torque - np.cross(omega_k, I @ omega_k)
    omega_next = omega_k + np.linalg.solve(I, rhs) * dt
    R_next = R_k @ exp_so3(np.asarray(omega_k) * dt)
    return R_next, omega_next


def rollout(R0, omega0, torque_fn, model, dt, n_steps, reorthonormalize_every=REORTHONORMALIZE_EVERY):
    """Chain ``angular_step`` with a world-frame torque ``torque_fn(k)``.

    Rotations are re-projected onto SO(3) every ``reorthonormalize_every`` steps.
    """
    Rs = [np.asarray(R0, dtype=float)]
    ws = [np.asarray(omega0, dtype=float)]
    zero = np.zeros((1, 3))
    for k in range(n_steps):
        tau = np.asarray(torque_fn(k), dtype=float)
        # the Euler update is affine in the torque
        R, w = angular_step(Rs[-1], ws[-1], zero, zero, np.zeros(3), model, dt)
        w = w + np.linalg.solve(model.inertia, Rs[-1].T @ tau) * dt
        if reorthonormalize_every and (k + 1) % reorthonormalize_every == 0:
            R = project_to_so3(R)
        Rs.append(R)
        ws.append(w)
    return np.array(Rs), np.array(ws)


# --- translational superposition ----------------------------------------------


def gravity_solution(x_init, v_init, t, g=GRAVITY):
    """Ballistic motion from the initial state."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DynamicsDomainError("t must be non-negative")
    t = t[..., None]
    return np.asarray(x_init) + np.asarray(v_init) * t + 0.5 * np.asarray(g) * t**2


def swing_segment(chi, chi_dot, t, segment_start):
    """Force-free (straight-line) particular solution during swing."""
    tau = np.asarray(t, dtype=float) - segment_start
    if np.any(tau < -1e-12):
        raise DynamicsDomainError("t precedes the segment start")
    return np.asarray(chi) + np.asarray(chi_dot) * tau[..., None]


def stance_segment(alpha, chi, chi_dot, duration, mass) -> BezierSegment:
    """Particular solution during stance as a degree M+2 Bezier segment."""
    if not duration > 0:
        raise DynamicsDomainError(f"stance duration must be positive, got {duration}")
    return integrate_accel(alpha, mass, chi, chi_dot, duration)


@dataclass
class _Segment:
    start: float
    duration: float
    chi: np.ndarray
    chi_dot: np.ndarray
    bezier: BezierSegment | None = None  # None for swing
    force: BezierSegment | None = None

    def position(self, t):
        if self.bezier is None:
            return swing_segment(self.chi, self.chi_dot, t, self.start)
        s = (np.asarray(t) - self.start) / self.duration
        return basis_matrix(self.bezier.degree, s) @ self.bezier.control_points

    def velocity(self, t):
        if self.bezier is None:
            return np.broadcast_to(self.chi_dot, np.shape(t) + (3,)).copy()
        d = self.bezier.derivative()
        s = (np.asarray(t) - self.start) / self.duration
        return basis_matrix(d.degree, s) @ d.control_points

    def acceleration(self, t):
        if self.bezier is None:
            return np.zeros(np.shape(t) + (3,))
        d2 = self.bezier.derivative().derivative()
        s = (np.asarray(t) - self.start) / self.duration
        return basis_matrix(d2.degree, s) @ d2.control_points

    def end_state(self):
        return self.position(self.start + self.duration), self.velocity(self.start + self.duration)


class TranslationalTrajectory:
    """Body position as the sum of the ballistic term and per-leg segments.

    ``alpha``: (n_legs, n_stance, M+1, 3) force control points,
    ``durations``: (n_legs, n_phase), ``chi``/``chi_dot``: (n_legs, n_phase, 3)
    segment initial states.
    """

    def __init__(self, alpha, durations, chi, chi_dot, x_init, v_init, mass, gravity=GRAVITY):
        self.alpha = np.asarray(alpha, dtype=float)
        self.durations = np.asarray(durations, dtype=float)
        self.chi = np.asarray(chi, dtype=float)
        self.chi_dot = np.asarray(chi_dot, dtype=float)
        self.x_init = np.asarray(x_init, dtype=float)
        self.v_init = np.asarray(v_init, dtype=float)
        self.mass = float(mass)
        self.gravity = np.asarray(gravity, dtype=float)
        self.horizon = float(self.durations.sum(axis=1).max())
        self.legs = [self._build_leg(i) for i in range(self.durations.shape[0])]

    def _build_leg(self, i):
        segments = []
        start = 0.0
        for q, dT in enumerate(self.durations[i]):
            chi, chi_dot = self.chi[i, q], self.chi_dot[i, q]
            if q % 2 == 0:
                a = self.alpha[i, q // 2]
                seg = _Segment(start, dT, chi, chi_dot, stance_segment(a, chi, chi_dot, dT, self.mass),
                               BezierSegment(a, dT))
            else:
                seg = _Segment(start, dT, chi, chi_dot)
            segments.append(seg)
            start += dT
        return segments

    def _active(self, leg, t):
        segs = self.legs[leg]
        ends = np.cumsum([s.duration for s in segs])
        q = np.minimum(np.searchsorted(ends, t, side="right"), len(segs) - 1)
        return q

    def _sum_legs(self, t, attr):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros(t.shape + (3,))
        for i, segs in enumerate(self.legs):
            q = self._active(i, t)
            for j in np.unique(q):
                m = q == j
                out[m] += getattr(segs[j], attr)(t[m])
        return out

    def particular(self, leg, t):
        """Position contributed by one leg."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q = self._active(leg, t)
        out = np.zeros(t.shape + (3,))
        for j in np.unique(q):
            m = q == j
            out[m] = self.legs[leg][j].position(t[m])
        return out

    def position(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return gravity_solution(self.x_init, self.v_init, t, self.gravity) + self._sum_legs(t, "position")

    def velocity(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.v_init + self.gravity * t[:, None] + self._sum_legs(t, "velocity")

    def acceleration_from_position(self, t):
        """Second derivative of the position curves themselves."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.gravity + self._sum_legs(t, "acceleration")

    def forces(self, leg, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q = self._active(leg, t)
        out = np.zeros(t.shape + (3,))
        for j in np.unique(q):
            seg = self.legs[leg][j]
            if seg.force is None:
                continue
            m = q == j
            s = (t[m] - seg.start) / seg.duration
            out[m] = basis_matrix(seg.force.degree, s) @ seg.force.control_points
        return out

    def acceleration(self, t):
        """``g + sum_i f_i / m`` straight from the force curves."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        total = sum(self.forces(i, t) for i in range(len(self.legs)))
        return self.gravity + total / self.mass

    def continuity_defects(self):
        """Per leg and junction, (position, velocity) mismatch between segments."""
        out = np.zeros(self.chi.shape[:2] + (2, 3))
        for i, segs in enumerate(self.legs):
            out[i, 0, 0] = segs[0].chi
            out[i, 0, 1] = segs[0].chi_dot
            for q in range(1, len(segs)):
                p, v = segs[q - 1].end_state()
                out[i, q, 0] = p.reshape(3) - segs[q].chi
                out[i, q, 1] = v.reshape(3) - segs[q].chi_dot
        return out


def body_position(xi, t):
    """(x, xdot, xddot) at time(s) ``t`` for a decision vector in analytic mode.

    ``xi`` needs ``alpha``, ``durations``, ``chi``, ``chi_dot`` and a scenario
    with ``x_init``, ``xdot_init``, ``robot.mass`` and ``robot.gravity``.
    """
    sc = xi.scenario
    traj = TranslationalTrajectory(xi.alpha, xi.durations, xi.chi, xi.chi_dot, sc.x_init, sc.xdot_init,
                                   sc.robot.mass, sc.robot.gravity)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0) or np.any(t_arr > sc.T_total + 1e-12):
        raise DynamicsDomainError("t outside the horizon")
    return traj.position(t_arr), traj.velocity(t_arr), traj.acceleration(t_arr)
