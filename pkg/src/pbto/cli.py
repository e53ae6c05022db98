"""Command line front end: ``run``, ``sweep`` and ``plotdata``.

Exit codes: 0 converged, 2 solver failure, 1 usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from multiprocessing import get_context
from pathlib import Path

from . import metrics, runner
from .config import ConfigError, load, scenario_config
from .scenarios import TERRAIN_PRESETS, BatchProtocol, batch
from .solver import SqpOptions

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
OUT_ENV = "PBTO_OUT"
DEFAULT_OUT = "pbto_out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_root(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _common(p, count=False):
    p.add_argument("--config", required=True, help="scenario INI file")
    p.add_argument("--mode", help="proposed | baseline" + (" | both" if count else ""))
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--dt-metrics", type=float, help="metric grid spacing in seconds")
    p.add_argument("--max-iter", type=int, help="SQP iteration cap")
    p.add_argument("--trace", action="store_true", help="print per-iteration solver progress to stderr")
    p.add_argument("overrides", nargs="*", metavar="section.field=value")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pbto", description="Phase-based trajectory optimization for legged robots.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="solve one scenario")
    _common(run)
    sweep = sub.add_parser("sweep", help="solve a randomized batch per terrain and mode")
    _common(sweep, count=True)
    sweep.add_argument("--count", type=int, default=20)
    sweep.add_argument("--terrains", default="plane", help="comma separated terrain presets")
    sweep.add_argument("--workers", type=int, default=1)
    plot = sub.add_parser("plotdata", help="emit long-format plot series for a run directory")
    plot.add_argument("run_dir")
    plot.add_argument("--out", help="output CSV (default <run_dir>/plotdata.csv)")
    return parser


def _options(cfg, args) -> SqpOptions:
    kw = {}
    max_iter = args.max_iter if args.max_iter is not None else cfg.get("solver", "max_iter")
    if max_iter is not None:
        if max_iter < 1:
            raise UsageError("max-iter must be at least 1")
        kw["max_iter"] = int(max_iter)
    if cfg.get("solver", "line_search") is not None:
        kw["line_search"] = bool(cfg.get("solver", "line_search"))
    return SqpOptions(**kw)


def _dtau(cfg, args) -> float:
    dtau = args.dt_metrics if args.dt_metrics is not None else cfg.get("solver", "dt_metrics", metrics.DEFAULT_DTAU)
    if not dtau > 0:
        raise UsageError("dt-metrics must be positive")
    return float(dtau)


def _load(args):
    overrides = list(args.overrides)
    if args.mode is not None and args.mode != "both":
        overrides.append(f"solver.mode={args.mode}")
    if args.seed is not None:
        overrides.append(f"solver.seed={args.seed}")
    return load(args.config, overrides)


def _tracer(enabled):
    if not enabled:
        return None

    def cb(u, xi, row):
        print(f"iter {u:3d}  h={row['h']:.6g}  phi_eq={row['phi_eq']:.3g}  phi_ineq={row['phi_ineq']:.3g}  "
              f"step={row['step']:.3g}", file=sys.stderr, flush=True)
    return cb


def cmd_run(args) -> int:
    cfg = _load(args)
    sc = cfg.scenario()
    if cfg.get("solver", "name") is None:
        sc = replace(sc, name=Path(args.config).stem)
    out = _out_root(args) / f"{sc.name}-{sc.mode.value}-{sc.seed}"
    res = runner.solve_and_audit(sc, _options(cfg, args), _dtau(cfg, args), out, cfg.dump(sc), _tracer(args.trace))
    print(f"{res.reason} after {res.iterations} iterations; artifacts in {out}")
    return EXIT_OK if res.converged else EXIT_SOLVER


def _sweep_job(job):
    sc, options, dtau, out_dir, solver_extra = job
    text = scenario_config(sc, **solver_extra).dump(sc)
    return runner.solve_and_audit(sc, options, dtau, out_dir, text)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    terrains = [t.strip() for t in args.terrains.split(",") if t.strip()]
    if not terrains:
        raise UsageError("the terrain list is empty")
    for t in terrains:
        if t not in TERRAIN_PRESETS and t != "custom-heightfield":
            raise UsageError(f"unknown terrain {t!r}; choose from {sorted(TERRAIN_PRESETS)}")
    if args.count < 1:
        raise UsageError("count must be at least 1")
    if args.workers < 1:
        raise UsageError("workers must be at least 1")
    mode = args.mode or "both"
    if mode not in ("proposed", "baseline", "both"):
        raise UsageError(f"unknown mode {mode!r}")
    modes = ["proposed", "baseline"] if mode == "both" else [mode]
    base = cfg.scenario()
    seed = args.seed if args.seed is not None else base.seed
    options, dtau = _options(cfg, args), _dtau(cfg, args)
    extra = {k: cfg.get("solver", k) for k in ("max_iter", "line_search") if cfg.get("solver", k) is not None}
    out = _out_root(args)
    jobs, tags = [], []
    for terrain in terrains:
        for sc in batch(BatchProtocol(count=args.count, seed=seed, terrain=terrain, base=base)):
            for m in modes:
                s = sc.with_mode(m)
                jobs.append((s, options, dtau, out / "runs" / f"{s.name}-{m}", extra))
                tags.append(terrain)
    if args.workers == 1:
        results = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers, mp_context=get_context("spawn")) as pool:
            results = list(pool.map(_sweep_job, jobs))
    out.mkdir(parents=True, exist_ok=True)
    n_legs = base.robot.n_legs
    metrics.write_summary(out / runner.SUMMARY_FILE, [r.row for r in results], n_legs)
    fields, rows, timing = runner.aggregate(list(zip(tags, results)), n_legs)
    runner.write_rows(out / "aggregate.csv", fields, rows)
    runner.write_rows(out / "aggregate_timing.csv", ["terrain", "mode", "wall_time_mean", "wall_time_std"], timing)
    runner.write_timing(out / runner.TIMING_FILE, [(r.scenario.name, r.scenario.mode.value, r.wall_time)
                                                   for r in results])
    failed = sum(not r.converged for r in results)
    print(f"{len(results) - failed}/{len(results)} runs converged; aggregate in {out / 'aggregate.csv'}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    run_dir = Path(args.run_dir)
    for name in (runner.TRAJECTORY_FILE, runner.CONFIG_FILE):
        if not (run_dir / name).is_file():
            raise UsageError(f"missing run artifact {run_dir / name}")
    series = runner.plot_series(run_dir)
    path = Path(args.out) if args.out else run_dir / runner.PLOTDATA_FILE
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "tau", "value"])
        for name, t, v in series:
            w.writerow([name, metrics.fmt(t), metrics.fmt(v)])
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
