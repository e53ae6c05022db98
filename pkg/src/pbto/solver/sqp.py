"""Gauss-Newton SQP over the assembled problem."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from ..nlp.problem import Problem, phi_values
from .qp import CONVERGED, QpOptions, QpProblem, solve_qp
from .solution import TrajectorySolution

CONVERGED_REASON = "converged"
MAX_ITER_REASON = "max-iter"
QP_FAILURE_REASON = "qp-failure"

TRACE_FIELDS = ("iteration", "h", "phi_eq", "phi_ineq", "step", "rho", "qp_status", "qp_iterations")


@dataclass(frozen=True)
class SqpOptions:
    max_iter: int = 100
    rel_tol: float = 0.1
    feas_tol: float = 1e-3
    hessian_reg: float = 1e-8
    line_search: bool = True
    armijo: float = 1e-4
    min_step: float = 1e-3
    levenberg: float = 1e-2
    scale_variables: bool = True
    duration_radius: float | None = 0.05
    duration_radius_bounds: tuple[float, float] = (1e-6, 0.5)
    guard: float = 1e-12
    qp: QpOptions = field(default_factory=QpOptions)


@dataclass
class SqpReport:
    iterations: int = 0
    h: list = field(default_factory=list)
    phi_eq: list = field(default_factory=list)
    phi_ineq: list = field(default_factory=list)
    reason: str = MAX_ITER_REASON
    trace: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return self.reason == CONVERGED_REASON

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_FIELDS)
            for row in self.trace:
                w.writerow([_fmt(row[k]) for k in TRACE_FIELDS])


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def relative_decrease(previous: float, current: float, guard: float = 1e-12) -> float:
    """``(previous - current) / current``; zero when the denominator is below ``guard``."""
    if abs(current) < guard:
        return 0.0
    return (previous - current) / current


def converged(prev, cur, rel_tol: float = 0.1, feas_tol: float = 1e-3, guard: float = 1e-12) -> bool:
    """Termination test on ``(h, phi_eq, phi_ineq)`` of two consecutive iterates."""
    h0, e0, i0 = prev
    h1, e1, i1 = cur
    return (relative_decrease(h0, h1, guard) < rel_tol
            and relative_decrease(e0, e1, guard) < rel_tol and e1 < feas_tol
            and relative_decrease(i0, i1, guard) < rel_tol and i1 < feas_tol)


def variable_scale(problem) -> np.ndarray:
    """Per-variable scale; forces are measured in units of one leg's weight share."""
    D = np.ones(problem.n_z)
    if isinstance(problem, Problem):
        sc = problem.scenario
        D[problem.index_map.slice("alpha")] = sc.robot.weight / sc.robot.n_legs
    return D


def _duration_indices(problem) -> np.ndarray:
    if isinstance(problem, Problem):
        return np.arange(problem.n_z)[problem.index_map.slice("durations")]
    return np.zeros(0, dtype=int)


def _merit(r, ce, ci, rho):
    return float(r @ r) + rho * (np.abs(ce).sum() + np.maximum(ci, 0.0).sum())


def sqp(problem: Problem, xi0, options: SqpOptions | None = None, callback=None):
    """Run SQP from ``xi0``; returns ``(solution, SqpReport)``.

    ``problem`` needs ``n_z``, ``linearize``, ``residuals`` and ``retract``.
    For an assembled :class:`Problem` the solution is a
    :class:`TrajectorySolution`; otherwise it is the final iterate.
    """
    opts = options or SqpOptions()
    t_start = time.perf_counter()
    D = variable_scale(problem) if opts.scale_variables else np.ones(problem.n_z)
    xi = xi0.copy()
    if isinstance(problem, Problem):
        xi.durations = np.maximum(xi.durations, problem.scenario.dt_min)
    report = SqpReport()
    rho = 0.0
    prev = None
    dur_idx = _duration_indices(problem)
    radius = opts.duration_radius if dur_idx.size else None
    for u in range(opts.max_iter + 1):
        lin = problem.linearize(xi)
        h = lin.cost
        pe, pi = phi_values(lin.c_eq, lin.c_in)
        report.h.append(h)
        report.phi_eq.append(pe)
        report.phi_ineq.append(pi)
        report.iterations = u
        row = {"iteration": u, "h": h, "phi_eq": pe, "phi_ineq": pi, "step": 0.0, "rho": rho,
               "qp_status": "", "qp_iterations": 0}
        report.trace.append(row)
        if prev is not None and converged(prev, (h, pe, pi), opts.rel_tol, opts.feas_tol, opts.guard):
            report.reason = CONVERGED_REASON
            break
        if u == opts.max_iter:
            report.reason = MAX_ITER_REASON
            break
        prev = (h, pe, pi)

        Jr = lin.J_r * D
        base_H = 2.0 * Jr.T @ Jr
        g = 2.0 * Jr.T @ lin.r
        A_eq, A_in = lin.J_eq * D, lin.J_in * D
        b_in = -lin.c_in
        if radius is not None:
            # box on the duration step keeps node/phase assignments from jumping far
            E = np.zeros((dur_idx.size, problem.n_z))
            E[np.arange(dur_idx.size), dur_idx] = 1.0 / D[dur_idx]
            A_in = np.vstack([A_in, E, -E])
            b_in = np.concatenate([b_in, np.full(2 * dur_idx.size, radius)])
        sol = None
        for reg in (opts.hessian_reg, opts.levenberg * max(1.0, np.abs(np.diag(base_H)).max())):
            H = base_H + reg * np.eye(problem.n_z)
            sol = solve_qp(QpProblem(H, g, A_eq, -lin.c_eq, A_in, b_in), opts.qp)
            if sol.status == CONVERGED:
                break
        row["qp_status"] = sol.status
        row["qp_iterations"] = sol.iterations
        if sol.status != CONVERGED:
            report.reason = QP_FAILURE_REASON
            break
        d = D * sol.x
        step = 1.0
        if opts.line_search:
            duals = np.concatenate([np.abs(sol.y), np.abs(sol.z[:lin.c_in.size])])
            rho = max(rho, 1.1 * duals.max(initial=0.0) + 1e-6)
            m0 = _merit(lin.r, lin.c_eq, lin.c_in, rho)
            slope = g @ sol.x - rho * (np.abs(lin.c_eq).sum() + np.maximum(lin.c_in, 0.0).sum())
            while True:
                cand = problem.retract(xi, step * d)
                r, ce, ci = problem.residuals(cand)
                if _merit(r, ce, ci, rho) <= m0 + opts.armijo * step * min(slope, 0.0) or step <= opts.min_step:
                    break
                step *= 0.5
            xi = cand
        else:
            xi = problem.retract(xi, d)
        row["step"] = step
        if radius is not None:
            lo_r, hi_r = opts.duration_radius_bounds
            factor = 2.0 if step == 1.0 else 1.0 if step >= 0.25 else 0.5 if step >= 0.05 else 0.1
            radius = float(np.clip(radius * factor, lo_r, hi_r))
        row["rho"] = rho
        if callback is not None:
            callback(u, xi, row)
    report.wall_time = time.perf_counter() - t_start
    if isinstance(problem, Problem):
        return TrajectorySolution(xi, problem.scenario), report
    return xi, report
