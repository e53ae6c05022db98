"""Bernstein-basis algebra for Bezier segments.

A segment of degree ``n`` over a time interval of length ``T`` is

    B(s) = sum_k c_k b_k^n(s),    b_k^n(s) = C(n, k) s^k (1 - s)^(n - k),

with ``s = (t - t0) / T`` in [0, 1].  Because the basis is a partition of
unity with non-negative members, every sample is a convex combination of the
control points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
import scipy.linalg

MAX_TABULATED_DEGREE = 12


class BezierDomainError(ValueError):
    """Raised for out-of-range indices, degrees or normalized times."""


@lru_cache(maxsize=None)
def binomial_table(max_degree: int = MAX_TABULATED_DEGREE) -> tuple[tuple[int, ...], ...]:
    """Rows of Pascal's triangle up to ``max_degree`` inclusive."""
    return tuple(tuple(comb(n, k) for k in range(n + 1)) for n in range(max_degree + 1))


def binomial(n: int, k: int) -> int:
    if n <= MAX_TABULATED_DEGREE:
        return binomial_table()[n][k]
    return comb(n, k)


def _check_s(s, tol=0.0):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < -tol) or np.any(s_arr > 1.0 + tol) or np.any(~np.isfinite(s_arr)):
        raise BezierDomainError(f"normalized time must lie in [0, 1], got {s}")
    return s_arr


def bernstein(k: int, n: int, s: float) -> float:
    """Bernstein polynomial ``b_k^n(s)``."""
    if n < 0 or not 0 <= k <= n:
        raise BezierDomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    s = float(_check_s(s))
    return binomial(n, k) * s**k * (1.0 - s) ** (n - k)


def basis_matrix(n: int, s) -> np.ndarray:
    """All degree-``n`` Bernstein values at each entry of ``s``.

    Returns an array of shape ``s.shape + (n + 1,)``.  No domain check is done
    here so that callers can extrapolate slightly past the segment ends.
    """
    s = np.asarray(s, dtype=float)[..., None]
    k = np.arange(n + 1)
    coeffs = np.array(binomial_table(max(n, MAX_TABULATED_DEGREE))[n], dtype=float)
    return coeffs * s**k * (1.0 - s) ** (n - k)


@dataclass(frozen=True)
class BezierSegment:
    """Bezier curve in R^3 over a segment of length ``duration``."""

    control_points: np.ndarray
    duration: float = 1.0

    def __post_init__(self):
        pts = np.array(self.control_points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise BezierDomainError("control_points must be a non-empty (n+1, dim) array")
        if not self.duration > 0:
            raise BezierDomainError(f"duration must be positive, got {self.duration}")
        pts.setflags(write=False)
        object.__setattr__(self, "control_points", pts)
        object.__setattr__(self, "duration", float(self.duration))

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    def __call__(self, s):
        return evaluate(self, s)

    def at_time(self, tau):
        """Evaluate at local time ``tau`` (seconds since the segment start)."""
        return evaluate(self, np.asarray(tau, dtype=float) / self.duration)

    def derivative(self) -> "BezierSegment":
        """Time derivative as a segment of one degree lower."""
        return derivative(self)


def evaluate(segment: BezierSegment, s):
    """Point(s) on the curve at normalized time(s) ``s``."""
    s = _check_s(s)
    return basis_matrix(segment.degree, s) @ segment.control_points


def derivative(segment: BezierSegment) -> BezierSegment:
    n = segment.degree
    if n == 0:
        return BezierSegment(np.zeros((1, segment.control_points.shape[1])), segment.duration)
    c = segment.control_points
    return BezierSegment(n * (c[1:] - c[:-1]) / segment.duration, segment.duration)


@dataclass(frozen=True)
class SecondDiffMatrix:
    """Maps control points to (second-derivative points; initial velocity; initial value)."""

    order: int
    duration: float
    entries: np.ndarray

    def __matmul__(self, other):
        return self.entries @ other

    @property
    def accel_block(self) -> np.ndarray:
        return self.entries[: self.order - 1]


def second_diff_matrix(n: int, duration: float) -> SecondDiffMatrix:
    """Second-order differentiation matrix of a degree-``n`` segment.

    Rows ``0..n-2`` give the control points of the second time derivative,
    row ``n-1`` the initial velocity and row ``n`` the initial value.
    """
    if n < 2:
        raise BezierDomainError(f"second differentiation needs degree >= 2, got {n}")
    if not duration > 0:
        raise BezierDomainError(f"duration must be positive, got {duration}")
    K = np.zeros((n + 1, n + 1))
    scale = n * (n - 1) / duration**2
    for k in range(n - 1):
        K[k, k : k + 3] = scale * np.array([1.0, -2.0, 1.0])
    K[n - 1, 0] = -n / duration
    K[n - 1, 1] = n / duration
    K[n, 0] = 1.0
    K.setflags(write=False)
    return SecondDiffMatrix(order=n, duration=float(duration), entries=K)


def integrate_accel(accel_points, mass: float, init_pos, init_vel, duration: float) -> BezierSegment:
    """Position segment driven by a Bezier force curve.

    ``accel_points`` are the ``M + 1`` control points of the force acting on a
    point mass ``mass``.  The returned segment has degree ``M + 2``, satisfies
    ``mass * x''(t) = f(t)`` on the whole interval and starts at
    ``(init_pos, init_vel)``.  All three axes share one LU factorization.
    """
    alpha = np.atleast_2d(np.asarray(accel_points, dtype=float))
    if alpha.shape[0] < 1:
        raise BezierDomainError("accel_points must be non-empty")
    if not mass > 0:
        raise BezierDomainError(f"mass must be positive, got {mass}")
    n = alpha.shape[0] + 1
    K = second_diff_matrix(n, duration).entries
    rhs = np.vstack([alpha / mass, np.atleast_2d(init_vel), np.atleast_2d(init_pos)])
    lu = scipy.linalg.lu_factor(K, check_finite=True)
    beta = scipy.linalg.lu_solve(lu, rhs)
    if not np.all(np.isfinite(beta)):
        raise ArithmeticError("singular second-difference system")
    return BezierSegment(beta, duration)
