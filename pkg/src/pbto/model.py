"""Robot model, analytic terrains and friction pyramids."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TERRAIN_KINDS = ("plane", "block", "stairs", "chimney", "custom-heightfield")


class ModelError(ValueError):
    pass


def _default_hips():
    return np.array([[0.36, -0.21, 0.0], [0.36, 0.21, 0.0], [-0.36, -0.21, 0.0], [-0.36, 0.21, 0.0]])


def _default_feet():
    feet = _default_hips()
    feet[:, 2] = -0.51
    return feet


@dataclass(frozen=True)
class RobotModel:
    """Single rigid body with massless legs and point feet.

    Legs are ordered front-right, front-left, rear-right, rear-left.
    """

    mass: float = 43.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.41, 2.1, 2.1]))
    hip_offsets: np.ndarray = field(default_factory=_default_hips)
    nominal_feet: np.ndarray = field(default_factory=_default_feet)
    leg_length: float = 0.55
    f_n_max: float = 500.0
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        I = np.array(self.inertia, dtype=float)
        if I.shape == (3,):
            I = np.diag(I)
        hips = np.atleast_2d(np.array(self.hip_offsets, dtype=float))
        feet = np.atleast_2d(np.array(self.nominal_feet, dtype=float))
        g = np.array(self.gravity, dtype=float)
        errors = []
        if not self.mass > 0:
            errors.append(f"mass must be positive, got {self.mass}")
        if I.shape != (3, 3) or not np.allclose(I, I.T, atol=1e-12):
            errors.append("inertia must be a symmetric 3x3 matrix")
        elif np.linalg.eigvalsh(I).min() <= 0:
            errors.append("inertia must be positive definite")
        if hips.shape[1] != 3 or feet.shape != hips.shape:
            errors.append("hip_offsets and nominal_feet must both be (n_legs, 3)")
        elif np.any(np.linalg.norm(feet - hips, axis=1) >= self.leg_length):
            errors.append("nominal feet must be strictly within leg_length of the hips")
        if not self.f_n_max > 0:
            errors.append("f_n_max must be positive")
        if g.shape != (3,):
            errors.append("gravity must be a 3-vector")
        if errors:
            raise ModelError("; ".join(errors))
        for name, value in (("inertia", I), ("hip_offsets", hips), ("nominal_feet", feet), ("gravity", g)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "mass", float(self.mass))

    @property
    def n_legs(self) -> int:
        return self.hip_offsets.shape[0]

    @property
    def weight(self) -> float:
        return self.mass * float(np.linalg.norm(self.gravity))


@dataclass(frozen=True)
class Terrain:
    """Piecewise-planar analytic terrain.

    plane:    z = 0
    block:    z = step_height for x >= step_x
    stairs:   n_steps risers of step_height, the first at step_x, spaced step_length
    chimney:  two walls inclined by wall_incline rising away from |y| = half_gap
    custom-heightfield: bilinear interpolation of ``heights`` sampled on a grid
    with spacing ``resolution`` starting at ``origin``
    """

    kind: str = "plane"
    mu: float = 1.0
    step_x: float = 1.5
    step_height: float = 0.5
    step_length: float = 1.0
    n_steps: int = 1
    wall_incline: float = np.pi / 4
    half_gap: float = 0.0
    heights: np.ndarray | None = None
    origin: tuple[float, float] = (0.0, 0.0)
    resolution: float = 0.05

    def __post_init__(self):
        if self.kind not in TERRAIN_KINDS:
            raise ModelError(f"unknown terrain kind {self.kind!r}; expected one of {TERRAIN_KINDS}")
        if not self.mu > 0:
            raise ModelError("friction coefficient mu must be positive")
        if self.kind == "custom-heightfield":
            if self.heights is None:
                raise ModelError("custom-heightfield terrain needs a heights grid")
            h = np.array(self.heights, dtype=float)
            if h.ndim != 2 or min(h.shape) < 2:
                raise ModelError("heights must be a 2-D grid with at least 2x2 samples")
            h.setflags(write=False)
            object.__setattr__(self, "heights", h)

    def height(self, x, y, xp=np):
        """Terrain height; ``xp`` may be ``jax.numpy`` for traced evaluation."""
        if self.kind == "plane":
            return xp.zeros_like(x * 1.0)
        if self.kind == "block":
            return xp.where(x >= self.step_x, self.step_height, 0.0) + 0.0 * y
        if self.kind == "stairs":
            z = 0.0 * x + 0.0 * y
            for j in range(self.n_steps):
                z = z + xp.where(x >= self.step_x + j * self.step_length, self.step_height, 0.0)
            return z
        if self.kind == "chimney":
            return np.tan(self.wall_incline) * xp.maximum(xp.abs(y) - self.half_gap, 0.0) + 0.0 * x
        return self._bilinear(x, y, xp)

    def _bilinear(self, x, y, xp):
        h = xp.asarray(self.heights)
        nx, ny = self.heights.shape
        u = (x - self.origin[0]) / self.resolution
        v = (y - self.origin[1]) / self.resolution
        u = xp.clip(u, 0.0, nx - 1.0)
        v = xp.clip(v, 0.0, ny - 1.0)
        i = xp.clip(xp.floor(u), 0, nx - 2).astype(int)
        j = xp.clip(xp.floor(v), 0, ny - 2).astype(int)
        a = u - i
        b = v - j
        return ((1 - a) * (1 - b) * h[i, j] + a * (1 - b) * h[i + 1, j]
                + (1 - a) * b * h[i, j + 1] + a * b * h[i + 1, j + 1])

    def gradient(self, x: float, y: float) -> tuple[float, float]:
        """Height slope (dz/dx, dz/dy) of the face containing (x, y)."""
        if self.kind in ("plane", "block", "stairs"):
            return 0.0, 0.0
        if self.kind == "chimney":
            if abs(y) <= self.half_gap and not (self.half_gap == 0.0 and y == 0.0):
                return 0.0, 0.0
            side = 1.0 if y >= 0 else -1.0
            return 0.0, side * np.tan(self.wall_incline)
        nx, ny = self.heights.shape
        u = np.clip((x - self.origin[0]) / self.resolution, 0.0, nx - 1.0)
        v = np.clip((y - self.origin[1]) / self.resolution, 0.0, ny - 1.0)
        i = int(np.clip(np.floor(u), 0, nx - 2))
        j = int(np.clip(np.floor(v), 0, ny - 2))
        a, b = u - i, v - j
        h = self.heights
        dzdu = (1 - b) * (h[i + 1, j] - h[i, j]) + b * (h[i + 1, j + 1] - h[i, j + 1])
        dzdv = (1 - a) * (h[i, j + 1] - h[i, j]) + a * (h[i + 1, j + 1] - h[i + 1, j])
        return dzdu / self.resolution, dzdv / self.resolution

    def on_edge(self, x: float, y: float, tol: float = 1e-12) -> bool:
        """True when (x, y) sits on a height or slope discontinuity."""
        if self.kind == "block":
            return abs(x - self.step_x) <= tol
        if self.kind == "stairs":
            return any(abs(x - (self.step_x + j * self.step_length)) <= tol for j in range(self.n_steps))
        if self.kind == "chimney":
            return abs(abs(y) - self.half_gap) <= tol
        return False


class SurfaceFrame(NamedTuple):
    normal: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    on_edge: bool = False

    def matrix(self) -> np.ndarray:
        """Rows (n, t1, t2)."""
        return np.vstack([self.normal, self.t1, self.t2])


def terrain_height(terrain: Terrain, x, y):
    return terrain.height(x, y)


def terrain_frame(terrain: Terrain, x: float, y: float) -> SurfaceFrame:
    """Outward normal and tangents of the terrain face at (x, y).

    On a discontinuity the face owning the point under the half-open
    convention is returned and ``on_edge`` is set.
    """
    hx, hy = terrain.gradient(x, y)
    n = np.array([-hx, -hy, 1.0])
    n /= np.linalg.norm(n)
    t1 = np.array([1.0, 0.0, hx])
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return SurfaceFrame(n, t1, t2, terrain.on_edge(x, y))


def _check_frame(frame: SurfaceFrame, tol=1e-9):
    F = frame.matrix() if hasattr(frame, "matrix") else np.vstack(frame[:3])
    if not np.allclose(F @ F.T, np.eye(3), atol=tol):
        raise ModelError("surface frame is not orthonormal")
    return F


@dataclass(frozen=True)
class FrictionPyramid:
    """Halfspaces ``A f <= b`` of a linearized friction cone.

    Row order: t1 - mu n, -t1 - mu n, t2 - mu n, -t2 - mu n, n (upper bound), -n.
    """

    A: np.ndarray
    b: np.ndarray
    normal: np.ndarray
    mu: float

    def residual(self, f) -> np.ndarray:
        return np.asarray(f) @ self.A.T - self.b

    def contains(self, f, tol: float = 0.0) -> bool | np.ndarray:
        return np.all(self.residual(f) <= tol, axis=-1)


def pyramid_rows(normal, t1, t2, mu: float, f_max: float):
    A = np.vstack([t1 - mu * normal, -t1 - mu * normal, t2 - mu * normal, -t2 - mu * normal, normal, -normal])
    b = np.array([0.0, 0.0, 0.0, 0.0, f_max, 0.0])
    return A, b


def pyramid(frame: SurfaceFrame, mu: float, f_max: float) -> FrictionPyramid:
    if not mu > 0 or not f_max > 0:
        raise ModelError("mu and f_max must be positive")
    F = _check_frame(frame)
    n, t1, t2 = F
    A, b = pyramid_rows(n, t1, t2, mu, f_max)
    A.setflags(write=False)
    b.setflags(write=False)
    return FrictionPyramid(A=A, b=b, normal=n.copy(), mu=float(mu))
