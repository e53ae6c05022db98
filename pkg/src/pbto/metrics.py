"""Post-hoc feasibility audit of a trajectory: TD, AD and FC violations."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import pyramid_rows
from .scenarios import leg_frames
from .solver.qp import QpProblem, solve_qp

DEFAULT_DTAU = 0.01

SUMMARY_FIELDS_HEAD = ("scenario", "mode", "seed")
SUMMARY_FIELDS_TAIL = ("status", "iterations")


class MetricsDomainError(ValueError):
    pass


def time_grid(T: float, dtau: float) -> np.ndarray:
    """``tau_k = k * dtau`` over ``[0, T]``, closed with ``T`` when it is off-grid."""
    if not dtau > 0:
        raise MetricsDomainError(f"dtau must be positive, got {dtau}")
    n = int(np.floor(T / dtau + 1e-9))
    t = np.arange(n + 1) * dtau
    if T - t[-1] > 1e-9 * max(1.0, T):
        t = np.append(t, T)
    else:
        t[-1] = T
    return t


def _trapezoid(y, t):
    return np.trapezoid(y, t, axis=0)


def td_series(sol, t, method: str = "analytic") -> np.ndarray:
    """``m xdd - m g - sum f`` at times ``t``, shape (len(t), 3).

    ``analytic`` differentiates the position curves exactly; ``numeric``
    uses central second differences of sampled positions on ``t``.
    """
    if method == "analytic":
        acc = sol.acceleration(t)
    elif method == "numeric":
        acc = numeric_second_derivative(sol.position(t), t)
    else:
        raise MetricsDomainError(f"unknown differentiation method {method!r}")
    return sol.mass * acc - sol.mass * sol.gravity - sol.forces(t).sum(axis=0)


def numeric_second_derivative(x, t) -> np.ndarray:
    """Second differences on a (possibly non-uniform) grid; one-sided at the ends."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.empty_like(x)
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    out[1:-1] = 2 * (h0[:, None] * x[2:] - (h0 + h1)[:, None] * x[1:-1] + h1[:, None] * x[:-2]) / (
        (h0 * h1 * (h0 + h1))[:, None])
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def td_violation(sol, dtau: float = DEFAULT_DTAU, method: str = "analytic") -> np.ndarray:
    t = time_grid(sol.T, dtau)
    return _trapezoid(np.abs(td_series(sol, t, method)), t) / sol.T


def ad_series(sol, t) -> np.ndarray:
    """``R(I wd + w x I w) - sum (p_i - x) x f_i`` at times ``t``."""
    I = sol.scenario.robot.inertia
    R = sol.orientation(t)
    w = sol.angular_velocity(t)
    wd = sol.angular_acceleration(t)
    Iw = w @ I.T
    body = wd @ I.T + np.cross(w, Iw)
    lhs = np.einsum("kij,kj->ki", R, body)
    x = sol.position(t)
    torque = np.cross(sol.feet(t) - x[None], sol.forces(t)).sum(axis=0)
    return lhs - torque


def ad_violation(sol, dtau: float = DEFAULT_DTAU) -> np.ndarray:
    t = time_grid(sol.T, dtau)
    return _trapezoid(np.abs(ad_series(sol, t)), t) / sol.T


def pyramid_distance(f, A, b) -> float:
    """Euclidean distance from ``f`` to ``{y : A y <= b}``."""
    f = np.asarray(f, dtype=float)
    if np.all(A @ f <= b):
        return 0.0
    sol = solve_qp(QpProblem(np.eye(3), -f, A_in=A, b_in=b))
    return float(np.linalg.norm(sol.x - f))


def fc_violation(sol, leg: int, dtau: float = DEFAULT_DTAU):
    """Stance-averaged distance of ``f_leg`` to its pyramid; ``(value, never_in_stance)``."""
    t = time_grid(sol.T, dtau)
    A, b = leg_pyramid(sol.scenario, leg)
    contact = sol.in_contact(leg, t).astype(float)
    denom = _trapezoid(contact, t)
    if denom <= 0:
        return 0.0, True
    f = sol.force(leg, t)
    d = np.array([pyramid_distance(fk, A, b) if c else 0.0 for fk, c in zip(f, contact)])
    return float(_trapezoid(d * contact, t) / denom), False


def leg_pyramid(scenario, leg: int):
    n, t1, t2 = leg_frames(scenario)[leg]
    return pyramid_rows(n, t1, t2, scenario.terrain.mu, scenario.robot.f_n_max)


@dataclass
class ViolationReport:
    td: np.ndarray
    ad: np.ndarray
    fc: np.ndarray
    dtau: float = DEFAULT_DTAU
    never_in_stance: list = field(default_factory=list)

    def row(self) -> dict:
        out = {}
        for a, v in zip("xyz", self.td):
            out[f"td_{a}"] = float(v)
        for a, v in zip("xyz", self.ad):
            out[f"ad_{a}"] = float(v)
        for i, v in enumerate(self.fc):
            out[f"fc_{i + 1}"] = float(v)
        return out


def evaluate(sol, dtau: float = DEFAULT_DTAU, td_method: str = "analytic") -> ViolationReport:
    fc, flags = [], []
    for i in range(sol.n_legs):
        v, never = fc_violation(sol, i, dtau)
        fc.append(v)
        if never:
            flags.append(i)
    return ViolationReport(td=td_violation(sol, dtau, td_method), ad=ad_violation(sol, dtau), fc=np.array(fc),
                           dtau=dtau, never_in_stance=flags)


def summary_fields(n_legs: int = 4) -> list[str]:
    return (list(SUMMARY_FIELDS_HEAD) + [f"td_{a}" for a in "xyz"] + [f"ad_{a}" for a in "xyz"]
            + [f"fc_{i + 1}" for i in range(n_legs)] + list(SUMMARY_FIELDS_TAIL))


def summary_row(scenario, report: ViolationReport, status: str, iterations: int) -> dict:
    row = {"scenario": scenario.name, "mode": scenario.mode.value, "seed": scenario.seed}
    row.update(report.row())
    row.update(status=status, iterations=iterations)
    return row


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_summary(path, rows, n_legs: int = 4):
    fields = summary_fields(n_legs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([fmt(row[k]) for k in fields])
