"""Solve-and-audit pipeline shared by the command line front end."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import metrics
from .nlp import assemble
from .scenarios import Scenario, initial_guess
from .solver import SqpOptions, sqp

TRAJECTORY_FILE = "trajectory.csv"
SUMMARY_FILE = "summary.csv"
TRACE_FILE = "trace.csv"
CONFIG_FILE = "config.ini"
TIMING_FILE = "timing.csv"
PLOTDATA_FILE = "plotdata.csv"


@dataclass
class RunResult:
    scenario: Scenario
    row: dict
    reason: str
    iterations: int
    wall_time: float
    out_dir: Path | None = None

    @property
    def converged(self) -> bool:
        return self.reason == "converged"


def trajectory_fields(n_legs: int) -> list[str]:
    cols = ["tau"]
    for name in ("x", "xd", "xdd"):
        cols += [f"{name}_{a}" for a in "xyz"]
    for i in range(1, n_legs + 1):
        cols += [f"p{i}_{a}" for a in "xyz"]
    for i in range(1, n_legs + 1):
        cols += [f"f{i}_{a}" for a in "xyz"]
    cols += [f"contact{i}" for i in range(1, n_legs + 1)]
    cols += ["q_w", "q_x", "q_y", "q_z", "w_x", "w_y", "w_z"]
    return cols


def trajectory_table(sol, dtau: float) -> tuple[list[str], np.ndarray]:
    t = metrics.time_grid(sol.T, dtau)
    L = sol.n_legs
    quat = Rotation.from_matrix(sol.orientation(t)).as_quat()  # x, y, z, w
    quat = np.column_stack([quat[:, 3], quat[:, :3]])
    quat *= np.where(quat[:, :1] < 0, -1.0, 1.0)
    parts = [t[:, None], sol.position(t), sol.velocity(t), sol.acceleration(t)]
    feet, forces = sol.feet(t), sol.forces(t)
    parts += [feet[i] for i in range(L)] + [forces[i] for i in range(L)]
    parts += [sol.contact_flags(t).T.astype(float), quat, sol.angular_velocity(t)]
    return trajectory_fields(L), np.hstack(parts)


def write_trajectory(path, sol, dtau: float):
    fields, table = trajectory_table(sol, dtau)
    n_legs = sol.n_legs
    contact_cols = set(range(1 + 9 + 6 * n_legs, 1 + 9 + 7 * n_legs))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in table:
            w.writerow([str(int(v)) if j in contact_cols else metrics.fmt(v) for j, v in enumerate(row)])


def read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def solve_and_audit(scenario: Scenario, options: SqpOptions, dtau: float = metrics.DEFAULT_DTAU,
                    out_dir=None, config_text: str | None = None, trace_callback=None) -> RunResult:
    problem = assemble(scenario)
    sol, report = sqp(problem, initial_guess(scenario), options, callback=trace_callback)
    viol = metrics.evaluate(sol, dtau)
    row = metrics.summary_row(scenario, viol, report.reason, report.iterations)
    result = RunResult(scenario, row, report.reason, report.iterations, report.wall_time)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory(out / TRAJECTORY_FILE, sol, dtau)
        metrics.write_summary(out / SUMMARY_FILE, [row], scenario.robot.n_legs)
        report.write_trace(out / TRACE_FILE)
        if config_text is not None:
            (out / CONFIG_FILE).write_text(config_text)
        write_timing(out / TIMING_FILE, [(scenario.name, scenario.mode.value, report.wall_time)])
        result.out_dir = out
    return result


def write_timing(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "mode", "wall_time"])
        for name, mode, wall in rows:
            w.writerow([name, mode, metrics.fmt(float(wall))])


VIOLATION_PREFIXES = ("td_", "ad_", "fc_")


def aggregate(results, n_legs: int = 4):
    """Per (terrain, mode): failures, and mean/std of every violation over converged runs."""
    cols = [c for c in metrics.summary_fields(n_legs) if c.startswith(VIOLATION_PREFIXES)]
    groups = {}
    for terrain, res in results:
        groups.setdefault((terrain, res.scenario.mode.value), []).append(res)
    rows, timing = [], []
    for (terrain, mode), members in groups.items():
        ok = [r for r in members if r.converged]
        row = {"terrain": terrain, "mode": mode, "runs": len(members), "failures": len(members) - len(ok)}
        for c in cols:
            vals = np.array([r.row[c] for r in ok], dtype=float)
            row[f"{c}_mean"] = float(vals.mean()) if vals.size else float("nan")
            row[f"{c}_std"] = float(vals.std()) if vals.size else float("nan")
        rows.append(row)
        walls = np.array([r.wall_time for r in members])
        timing.append({"terrain": terrain, "mode": mode, "wall_time_mean": float(walls.mean()),
                       "wall_time_std": float(walls.std())})
    fields = ["terrain", "mode", "runs", "failures"] + [f"{c}_{s}" for c in cols for s in ("mean", "std")]
    return fields, rows, timing


def write_rows(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([metrics.fmt(row[k]) for k in fields])


def plot_series(run_dir) -> list[tuple[str, float, float]]:
    """Long-format series comparing momentum derivative with total GRF and force ratios."""
    from .config import load

    run_dir = Path(run_dir)
    cfg = load(run_dir / CONFIG_FILE)
    sc = cfg.scenario()
    fields, table = read_table(run_dir / TRAJECTORY_FILE)
    col = {name: j for j, name in enumerate(fields)}
    m, g = sc.robot.mass, sc.robot.gravity
    L = sc.robot.n_legs
    tau = table[:, col["tau"]]
    out = []

    def add(name, values):
        out.extend((name, float(t), float(v)) for t, v in zip(tau, values))

    add("momentum_derivative_z", m * table[:, col["xdd_z"]] - m * g[2])
    add("grf_total_z", sum(table[:, col[f"f{i}_z"]] for i in range(1, L + 1)))
    mu = sc.terrain.mu
    for i in range(1, L + 1):
        fz = table[:, col[f"f{i}_z"]]
        fx = table[:, col[f"f{i}_x"]]
        contact = table[:, col[f"contact{i}"]] > 0.5
        ratio = np.where(contact & (np.abs(fz) > 1e-12), fx / np.where(fz == 0, 1.0, fz), np.nan)
        add(f"fx_over_fz_leg{i}", ratio)
    add("mu_upper", np.full(tau.shape, mu))
    add("mu_lower", np.full(tau.shape, -mu))
    return out
