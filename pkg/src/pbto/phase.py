"""Per-leg stance/swing phase schedules.

Every leg alternates stance and swing, starting and ending in stance, so
phase ``q`` (1-based) is a stance phase when ``q`` is odd.  Phase ``q`` of a
leg occupies the half-open interval ``[sigma^(q-1), sigma^q)``; the very last
instant of the horizon belongs to the final stance phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

DT_MIN = 0.01


class PhaseDomainError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseSchedule:
    """Phase durations, shape ``(n_legs, n_phase)``, over a horizon of ``total`` seconds."""

    durations: np.ndarray
    total: float
    dt_min: float = DT_MIN

    def __post_init__(self):
        d = np.array(self.durations, dtype=float)
        if d.ndim == 1:
            d = d[None, :]
        if d.ndim != 2 or d.shape[1] % 2 != 1:
            raise PhaseDomainError(f"need an odd number of phases per leg, got shape {d.shape}")
        if not self.total > 0:
            raise PhaseDomainError("total horizon must be positive")
        if np.any(d < self.dt_min - 1e-12):
            raise PhaseDomainError(f"phase durations below dt_min={self.dt_min}: {d.min()}")
        d.setflags(write=False)
        object.__setattr__(self, "durations", d)

    @property
    def n_legs(self) -> int:
        return self.durations.shape[0]

    @property
    def n_phase(self) -> int:
        return self.durations.shape[1]

    def sum_residuals(self) -> np.ndarray:
        """``sum_q dT[i, q] - total`` per leg; zero for a consistent schedule."""
        return self.durations.sum(axis=1) - self.total

    @staticmethod
    def is_stance(q: int) -> bool:
        return q % 2 == 1


@dataclass(frozen=True)
class PhaseLocator:
    leg: int
    phase_index: int
    kind: Literal["stance", "swing"]
    cycle: int
    s: float
    start: float
    duration: float

    def time(self) -> float:
        return self.start + self.s * self.duration


def cumulative_times(schedule: PhaseSchedule, leg: int) -> np.ndarray:
    """Phase end times ``sigma^1 .. sigma^n_phase`` of one leg."""
    return np.cumsum(schedule.durations[leg])


def locate(schedule: PhaseSchedule, leg: int, t: float) -> PhaseLocator:
    if not 0.0 <= t <= schedule.total:
        raise PhaseDomainError(f"t={t} outside the horizon [0, {schedule.total}]")
    sigma = cumulative_times(schedule, leg)
    n = schedule.n_phase
    q0 = min(int(np.searchsorted(sigma, t, side="right")), n - 1)
    start = sigma[q0 - 1] if q0 > 0 else 0.0
    duration = schedule.durations[leg, q0]
    s = (t - start) / duration
    if t == schedule.total:
        s = min(s, 1.0)
    q = q0 + 1
    kind = "stance" if PhaseSchedule.is_stance(q) else "swing"
    return PhaseLocator(leg=leg, phase_index=q, kind=kind, cycle=(q + 1) // 2, s=float(s),
                        start=float(start), duration=float(duration))


def in_contact(schedule: PhaseSchedule, leg: int, t: float) -> bool:
    return locate(schedule, leg, t).kind == "stance"
