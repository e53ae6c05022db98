"""Dense primal-dual interior-point solver for convex QPs.

    minimize    1/2 x'Hx + g'x
    subject to  A_eq x = b_eq,  A_in x <= b_in

Equalities are removed up front with a null-space basis from a pivoted QR,
then Mehrotra predictor-corrector iterations run on the reduced problem.
The multipliers follow the Lagrangian ``f + y'(A_eq x - b_eq) + z'(A_in x - b_in)``
with ``z >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import warnings

import numpy as np
import scipy.linalg

CONVERGED = "converged"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# merit progress below this fraction for this many steps counts as stalled
STALL_DECREASE = 1e-3
STALL_ITERATIONS = 5
NEAR_FACTOR = 1e3


class QpError(ValueError):
    pass


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.size
        if self.H.shape != (n, n):
            raise QpError(f"H must be {n}x{n}, got {self.H.shape}")
        scale = max(1.0, np.abs(self.H).max(initial=0.0))
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-10 * scale:
            raise QpError("H must be symmetric")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        self.A_in, self.b_in = _rows(self.A_in, self.b_in, n, "in")

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)

    def kkt_residuals(self, x, y, z) -> dict:
        """Infinity norms of stationarity, primal feasibility and complementarity."""
        stat = self.H @ x + self.g + self.A_eq.T @ y + self.A_in.T @ z
        slack = self.b_in - self.A_in @ x
        return {
            "stationarity": float(np.abs(stat).max(initial=0.0)),
            "equality": float(np.abs(self.A_eq @ x - self.b_eq).max(initial=0.0)),
            "inequality": float(np.maximum(-slack, 0.0).max(initial=0.0)),
            "dual_sign": float(np.maximum(-z, 0.0).max(initial=0.0)),
            "complementarity": float(np.abs(z * slack).max(initial=0.0)),
        }


def _rows(A, b, n, tag):
    if A is None or np.size(A) == 0:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape != (b.size, n):
        raise QpError(f"A_{tag} must be {b.size}x{n}, got {A.shape}")
    return A, b


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: str
    iterations: int = 0
    merit: list = field(default_factory=list)
    kkt: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.x, self.y, self.z, self.status))

    @property
    def ok(self) -> bool:
        return self.status == CONVERGED


@dataclass(frozen=True)
class QpOptions:
    tol: float = 1e-10
    max_iter: int = 100
    rank_tol: float = 1e-10
    step_fraction: float = 0.995
    regularization: float = 0.0


def _null_space(A_eq, b_eq, tol):
    """Particular solution, range and null-space bases of ``A_eq``."""
    n = A_eq.shape[1]
    if A_eq.shape[0] == 0:
        return np.zeros(n), np.zeros((n, 0)), np.eye(n), None, True
    Q, R, piv = scipy.linalg.qr(A_eq.T, mode="full", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(d.max(initial=0.0), 1.0)))
    Y, Z = Q[:, :rank], Q[:, rank:]
    R1 = R[:rank, :rank]
    # A_eq[piv[:rank]] = R1' Y'  =>  Y' x = R1^{-T} b[piv[:rank]]
    w = scipy.linalg.solve_triangular(R1, b_eq[piv[:rank]], trans="T")
    x_p = Y @ w
    resid = np.abs(A_eq @ x_p - b_eq).max(initial=0.0)
    consistent = resid <= 1e-8 * max(1.0, np.abs(b_eq).max(initial=0.0))
    return x_p, Y, Z, (R1, piv[:rank]), consistent


def _factor(M):
    try:
        return ("chol", scipy.linalg.cho_factor(M, lower=True, check_finite=False))
    except np.linalg.LinAlgError:
        return ("lu", scipy.linalg.lu_factor(M + 1e-12 * np.eye(len(M)) * max(1.0, np.abs(M).max()),
                                              check_finite=False))


def _fsolve(fac, rhs):
    kind, f = fac
    if kind == "chol":
        return scipy.linalg.cho_solve(f, rhs, check_finite=False)
    return scipy.linalg.lu_solve(f, rhs, check_finite=False)


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _ipm(H, g, A, b, opts: QpOptions):
    """Inequality-only Mehrotra predictor-corrector."""
    n, m = g.size, b.size
    merit_log = []
    if m == 0:
        fac = _factor(H + opts.regularization * np.eye(n))
        u = _fsolve(fac, -g)
        return u, np.zeros(0), np.zeros(0), CONVERGED, 0, merit_log
    scale_b = 1.0 + np.abs(b).max()
    # starting point
    fac = _factor(H + A.T @ A + opts.regularization * np.eye(n))
    u = _fsolve(fac, -g + A.T @ b)
    s = b - A @ u
    z = np.ones(m)
    s = np.where(s < 1.0, 1.0, s)
    status = MAX_ITER
    it = 0
    stalled = 0

    def merit_of(u_, s_, z_):
        rd = H @ u_ + g + A.T @ z_
        rp = A @ u_ + s_ - b
        return float(s_ @ z_ / m + np.abs(rp).max() + np.abs(rd).max())

    def within(u_, s_, z_, factor):
        rd = H @ u_ + g + A.T @ z_
        rp = A @ u_ + s_ - b
        scale = 1.0 + max(np.abs(g).max(), np.abs(H @ u_).max(), np.abs(A.T @ z_).max())
        tol = factor * opts.tol
        return (np.abs(rd).max() <= tol * scale and np.abs(rp).max() <= tol * scale_b
                and s_ @ z_ / m <= tol * (scale if factor > 1 else 1.0))

    merit = merit_of(u, s, z)
    merit_log.append(merit)
    for it in range(1, opts.max_iter + 1):
        rd = H @ u + g + A.T @ z
        rp = A @ u + s - b
        mu = s @ z / m
        scale_g = 1.0 + max(np.abs(g).max(), np.abs(H @ u).max(), np.abs(A.T @ z).max())
        if np.abs(rd).max() <= opts.tol * scale_g and np.abs(rp).max() <= opts.tol * scale_b and mu <= opts.tol:
            status = CONVERGED
            it -= 1
            break
        if z.max() > 1e14 or not np.isfinite(mu):
            status = INFEASIBLE
            break
        if np.abs(u).max() > 1e14:
            status = UNBOUNDED
            break
        W = z / s
        M = H + (A.T * W) @ A + opts.regularization * np.eye(n)
        fac = _factor(M)

        def direction(rc):
            # Z ds + S dz = -rc,  A du + ds = -rp,  H du + A'dz = -rd
            rhs = -rd - A.T @ ((-rc + z * rp) / s)
            du = _fsolve(fac, rhs)
            ds = -rp - A @ du
            dz = (-rc - z * ds) / s
            return du, ds, dz

        du_a, ds_a, dz_a = direction(s * z)
        a_aff = min(_max_step(s, ds_a), _max_step(z, dz_a))
        mu_aff = (s + a_aff * ds_a) @ (z + a_aff * dz_a) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        du, ds, dz = direction(s * z + ds_a * dz_a - sigma * mu)
        accepted = False
        for attempt in range(2):
            a = opts.step_fraction * min(_max_step(s, ds), _max_step(z, dz))
            for _ in range(30):
                cand = merit_of(u + a * du, s + a * ds, z + a * dz)
                if cand <= merit:
                    accepted = True
                    break
                a *= 0.5
            if accepted:
                break
            # fall back to a plain centered direction, which always descends
            du, ds, dz = direction(s * z - 0.1 * mu)
        if not accepted:
            # no descent left: accept the iterate if it is already at round-off level
            if within(u, s, z, NEAR_FACTOR):
                status = CONVERGED
            break
        stalled = stalled + 1 if merit - cand <= STALL_DECREASE * merit else 0
        u, s, z = u + a * du, s + a * ds, z + a * dz
        merit = cand
        if within(u, s, z, NEAR_FACTOR):
            polished = _polish(H, g, A, b, s, z, opts)
            if polished is not None and within(*polished, 1.0) and merit_of(*polished) <= merit:
                u, s, z = polished
                merit = merit_of(u, s, z)
                merit_log.append(merit)
                status = CONVERGED
                break
            if stalled >= STALL_ITERATIONS:
                status = CONVERGED
                merit_log.append(merit)
                break
        merit_log.append(merit)
    else:
        if within(u, s, z, NEAR_FACTOR):
            status = CONVERGED
    if status == CONVERGED:
        polished = _polish(H, g, A, b, s, z, opts)
        if polished is not None and merit_of(*polished) < merit:
            u, s, z = polished
            merit_log.append(merit_of(u, s, z))
    return u, s, z, status, it, merit_log


def _polish(H, g, A, b, s, z, opts: QpOptions):
    """Re-solve with the identified active set as equalities.

    The interior-point iterate is only accurate to the conditioning of its
    normal equations; a direct KKT solve on the active rows removes that
    floor when the active set is correct.
    """
    active = np.flatnonzero(s < z)
    n = g.size
    k = active.size
    if k > n:
        return None
    Aa = A[active]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H + opts.regularization * np.eye(n)
    K[:n, n:] = Aa.T
    K[n:, :n] = Aa
    rhs = np.concatenate([-g, b[active]])
    try:
        with warnings.catch_warnings():
            # a rank-deficient active set (degenerate vertex) means no polish
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.solve(K, rhs, assume_a="sym", check_finite=False)
    except (np.linalg.LinAlgError, ValueError, scipy.linalg.LinAlgWarning):
        return None
    if not np.all(np.isfinite(sol)):
        return None
    u = sol[:n]
    z_new = np.zeros_like(z)
    z_new[active] = sol[n:]
    slack = b - A @ u
    tol = opts.tol * (1.0 + np.abs(b).max())
    if np.any(slack < -tol) or np.any(z_new < -opts.tol * (1.0 + np.abs(g).max())):
        return None
    return u, np.maximum(slack, 0.0), np.maximum(z_new, 0.0)


def solve_qp(qp: QpProblem, options: QpOptions | None = None) -> QpSolution:
    """Solve a convex QP; failures are reported through ``status``."""
    opts = options or QpOptions()
    x_p, Y, Zb, rfac, consistent = _null_space(qp.A_eq, qp.b_eq, opts.rank_tol)
    if not consistent:
        return QpSolution(x_p, np.zeros(qp.A_eq.shape[0]), np.zeros(qp.A_in.shape[0]), INFEASIBLE)
    H_r = Zb.T @ qp.H @ Zb
    H_r = 0.5 * (H_r + H_r.T)
    g_r = Zb.T @ (qp.H @ x_p + qp.g)
    A_r = qp.A_in @ Zb
    b_r = qp.b_in - qp.A_in @ x_p
    if Zb.shape[1] == 0:
        u = np.zeros(0)
        slack = b_r
        z = np.zeros(qp.A_in.shape[0])
        status = CONVERGED if np.all(slack >= -1e-9) else INFEASIBLE
        it, merit = 0, []
    else:
        u, slack, z, status, it, merit = _ipm(H_r, g_r, A_r, b_r, opts)
    x = x_p + Zb @ u
    y = np.zeros(qp.A_eq.shape[0])
    if rfac is not None:
        R1, rows = rfac
        # A_eq' y = -(Hx + g + A_in' z), solved on the independent rows
        grad = qp.H @ x + qp.g + qp.A_in.T @ z
        w = -(Y.T @ grad)
        y[rows] = scipy.linalg.solve_triangular(R1, w)
    sol = QpSolution(x, y, z, status, it, merit)
    sol.kkt = qp.kkt_residuals(x, y, z)
    return sol
