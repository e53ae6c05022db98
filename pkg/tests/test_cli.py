import csv
from pathlib import Path

import numpy as np
import pytest

from pbto import cli, runner

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
STANDING = str(CONFIGS / "standing.ini")


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def standing_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    code = cli.main(["run", "--config", STANDING, "--out", str(out)])
    return code, out / "standing-proposed-0"


@pytest.mark.parametrize("argv", [[], ["fly"], ["run"], ["run", "--config", STANDING, "--max-iter", "zero"],
                                  ["run", "--config", STANDING, "--max-iter", "0"],
                                  ["run", "--config", STANDING, "--dt-metrics", "-1"],
                                  ["run", "--config", STANDING, "solver.nonsense=1"]])
def test_usage_errors_exit_one(argv, tmp_path, capsys):
    assert cli.main(argv + (["--out", str(tmp_path)] if len(argv) > 2 else [])) == 1
    assert "error" in capsys.readouterr().err


def test_missing_mass_exit_one_names_field(tmp_path, capsys):
    cfg = tmp_path / "nomass.ini"
    cfg.write_text("[robot]\n[terrain]\nkind = plane\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "robot.mass" in capsys.readouterr().err


def test_run_writes_artifacts(standing_run):
    code, run_dir = standing_run
    assert code == 0
    for name in (runner.TRAJECTORY_FILE, runner.SUMMARY_FILE, runner.TRACE_FILE, runner.CONFIG_FILE,
                 runner.TIMING_FILE):
        assert (run_dir / name).is_file(), name
    (row,) = read_csv(run_dir / runner.SUMMARY_FILE)
    assert row["status"] == "converged"
    assert all(float(row[f"td_{a}"]) < 1e-6 for a in "xyz")
    assert all(float(row[f"fc_{i}"]) < 1e-6 for i in range(1, 5))
    assert "wall_time" not in row


def test_trajectory_grid_matches_dtau(standing_run):
    _, run_dir = standing_run
    fields, table = runner.read_table(run_dir / runner.TRAJECTORY_FILE)
    assert fields[0] == "tau"
    assert np.allclose(np.diff(table[:, 0]), 0.01) and table[-1, 0] == 1.0
    assert "xdd_z" in fields and "f4_z" in fields and "contact1" in fields


def test_config_echo_reproduces_run(standing_run, tmp_path):
    _, run_dir = standing_run
    assert cli.main(["run", "--config", str(run_dir / runner.CONFIG_FILE), "--out", str(tmp_path)]) == 0
    again = next(tmp_path.iterdir())
    assert (again / runner.SUMMARY_FILE).read_bytes() == (run_dir / runner.SUMMARY_FILE).read_bytes()


def test_plotdata_series_coincide(standing_run):
    _, run_dir = standing_run
    assert cli.main(["plotdata", str(run_dir)]) == 0
    rows = read_csv(run_dir / runner.PLOTDATA_FILE)
    series = {}
    for r in rows:
        series.setdefault(r["series"], []).append(float(r["value"]))
    lhs, rhs = np.array(series["momentum_derivative_z"]), np.array(series["grf_total_z"])
    assert np.max(np.abs(lhs - rhs)) < 1e-6
    ratio = np.array(series["fx_over_fz_leg1"])
    assert np.all(np.abs(ratio[np.isfinite(ratio)]) <= series["mu_upper"][0] + 1e-9)


def test_plotdata_missing_artifacts(tmp_path):
    assert cli.main(["plotdata", str(tmp_path)]) == 1


def test_baseline_run_exit_code(tmp_path):
    code = cli.main(["run", "--config", STANDING, "--mode", "baseline", "--out", str(tmp_path)])
    assert code in (0, 2)
    assert (tmp_path / "standing-baseline-0" / runner.SUMMARY_FILE).is_file()


def test_sweep_empty_terrain_list(tmp_path):
    assert cli.main(["sweep", "--config", STANDING, "--terrains", " , ", "--out", str(tmp_path)]) == 1


def test_sweep_unknown_terrain_and_count(tmp_path):
    assert cli.main(["sweep", "--config", STANDING, "--terrains", "lava", "--out", str(tmp_path)]) == 1
    assert cli.main(["sweep", "--config", STANDING, "--count", "0", "--out", str(tmp_path)]) == 1


def test_sweep_aggregate_reproducible(tmp_path):
    argv = ["sweep", "--config", STANDING, "--count", "2", "--mode", "proposed", "--max-iter", "2"]
    for sub in ("a", "b"):
        assert cli.main(argv + ["--out", str(tmp_path / sub)]) == 0
    for name in ("aggregate.csv", runner.SUMMARY_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    (agg,) = read_csv(tmp_path / "a" / "aggregate.csv")
    assert agg["terrain"] == "plane" and agg["runs"] == "2"
    assert (tmp_path / "a" / "aggregate_timing.csv").is_file()


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["run", "--config", STANDING, "--max-iter", "1"]) in (0, 2)
    assert (tmp_path / "standing-proposed-0" / runner.SUMMARY_FILE).is_file()
