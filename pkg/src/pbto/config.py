"""INI scenario configuration: parsing, dotted overrides and echo."""

from __future__ import annotations

import configparser
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dynamics import exp_so3
from .model import ModelError, RobotModel, Terrain
from .nlp.layout import CostWeights, ProblemMode
from .scenarios import Scenario, ScenarioError

SECTIONS = ("robot", "terrain", "boundary", "solver", "weights")

# key -> (kind, shape) where kind is float | int | str | vec | bool
FIELDS = {
    "robot": {
        "mass": ("float", None), "inertia": ("vec", None), "hip_offsets": ("vec", (-1, 3)),
        "nominal_feet": ("vec", (-1, 3)), "leg_length": ("float", None), "f_n_max": ("float", None),
        "gravity": ("vec", (3,)),
    },
    "terrain": {
        "kind": ("str", None), "mu": ("float", None), "step_x": ("float", None), "step_height": ("float", None),
        "step_length": ("float", None), "n_steps": ("int", None), "wall_incline": ("float", None),
        "half_gap": ("float", None), "heights_file": ("str", None), "origin": ("vec", (2,)),
        "resolution": ("float", None),
    },
    "boundary": {
        "x_init": ("vec", (3,)), "xdot_init": ("vec", (3,)), "R_init": ("vec", None), "omega_init": ("vec", (3,)),
        "p_init": ("vec", (-1, 3)), "x_final": ("vec", (3,)), "xdot_final": ("vec", (3,)),
        "R_final": ("vec", None), "omega_final": ("vec", (3,)), "T_total": ("float", None),
    },
    "solver": {
        "n_nodes": ("int", None), "n_phase": ("int", None), "degree_feet": ("int", None),
        "degree_force": ("int", None), "mode": ("str", None), "seed": ("int", None), "max_iter": ("int", None),
        "line_search": ("bool", None), "dt_min": ("float", None), "init_durations": ("vec", None),
        "dt_metrics": ("float", None), "name": ("str", None),
    },
    "weights": {f"w{i}": ("float", None) for i in range(1, 7)},
}

REQUIRED = (("robot", "mass"), ("terrain", "kind"))


class ConfigError(ValueError):
    """Malformed configuration; ``problems`` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _parse_value(kind, shape, raw):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    values = np.array([float(v) for v in raw.replace(",", " ").split()])
    if shape is not None:
        values = values.reshape(shape)
    return values


class Config:
    """Typed view of the five configuration sections."""

    def __init__(self, values: dict | None = None, base_dir: Path | None = None):
        self.values = {s: dict((values or {}).get(s, {})) for s in SECTIONS}
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, base_dir=None) -> "Config":
        problems = []
        values = {s: {} for s in SECTIONS}
        for section in parser.sections():
            if section not in FIELDS:
                problems.append(f"unknown section [{section}]")
                continue
            for key, raw in parser.items(section):
                if key not in FIELDS[section]:
                    problems.append(f"unknown field {section}.{key}")
                    continue
                kind, shape = FIELDS[section][key]
                try:
                    values[section][key] = _parse_value(kind, shape, raw)
                except ValueError as exc:
                    problems.append(f"{section}.{key}: {exc}")
        for section, key in REQUIRED:
            if key not in values[section]:
                problems.append(f"missing required field {section}.{key}")
        if problems:
            raise ConfigError(problems)
        return cls(values, base_dir)

    def get(self, section, key, default=None):
        return self.values[section].get(key, default)

    def override(self, dotted: str, raw: str) -> None:
        if "." not in dotted:
            raise ConfigError([f"override {dotted!r} must look like section.field=value"])
        section, key = dotted.split(".", 1)
        if section not in FIELDS or key not in FIELDS[section]:
            raise ConfigError([f"unknown field {dotted}"])
        kind, shape = FIELDS[section][key]
        try:
            self.values[section][key] = _parse_value(kind, shape, raw)
        except ValueError as exc:
            raise ConfigError([f"{dotted}: {exc}"]) from exc

    # --- building domain objects -----------------------------------------------------

    def robot(self) -> RobotModel:
        kw = dict(self.values["robot"])
        if "inertia" in kw:
            # 9 entries row-major, or 3 principal moments
            I = np.asarray(kw["inertia"], dtype=float).reshape(-1)
            kw["inertia"] = np.diag(I) if I.size == 3 else I.reshape(3, 3) if I.size == 9 else I
        return RobotModel(**kw)

    def terrain(self) -> Terrain:
        kw = dict(self.values["terrain"])
        heights_file = kw.pop("heights_file", None)
        if heights_file is not None:
            path = Path(heights_file)
            if not path.is_absolute():
                path = self.base_dir / path
            kw["heights"] = np.loadtxt(path, delimiter=",", ndmin=2)
        if "origin" in kw:
            kw["origin"] = tuple(float(v) for v in kw["origin"])
        return Terrain(**kw)

    def weights(self) -> CostWeights:
        return CostWeights(**self.values["weights"])

    def scenario(self) -> Scenario:
        problems = []
        try:
            robot = self.robot()
        except (ModelError, TypeError, ValueError) as exc:
            problems.append(f"robot: {exc}")
        try:
            terrain = self.terrain()
        except (ModelError, OSError, ValueError) as exc:
            problems.append(f"terrain: {exc}")
        try:
            weights = self.weights()
        except ValueError as exc:
            problems.append(f"weights: {exc}")
        if problems:
            raise ConfigError(problems)
        kw = {}
        for key, value in self.values["boundary"].items():
            kw[key] = _rotation(value) if key in ("R_init", "R_final") else value
        solver = self.values["solver"]
        for key in ("n_nodes", "n_phase", "degree_feet", "degree_force", "seed", "dt_min", "init_durations", "name"):
            if key in solver:
                kw[key] = solver[key]
        if "mode" in solver:
            try:
                kw["mode"] = ProblemMode(solver["mode"])
            except ValueError:
                raise ConfigError([f"solver.mode must be proposed or baseline, got {solver['mode']!r}"]) from None
        if "init_durations" in kw and "n_phase" in kw and np.size(kw["init_durations"]) != kw["n_phase"]:
            kw["init_durations"] = np.reshape(kw["init_durations"], (-1, kw["n_phase"]))
        try:
            sc = Scenario(robot=robot, terrain=terrain, weights=weights, **kw)
        except (ValueError, TypeError) as exc:
            raise ConfigError([f"boundary: {exc}"]) from exc
        try:
            return sc.check()
        except ScenarioError as exc:
            raise ConfigError(exc.problems) from exc

    def with_scenario_overrides(self, **kw) -> "Config":
        new = Config(self.values, self.base_dir)
        for dotted, value in kw.items():
            section, key = dotted.split(".", 1)
            new.values[section][key] = value
        return new

    def dump(self, scenario: Scenario | None = None) -> str:
        """Resolved configuration, every field explicit."""
        sc = scenario or self.scenario()
        r, t = sc.robot, sc.terrain
        solver = dict(self.values["solver"])
        resolved = {
            "robot": {"mass": r.mass, "inertia": r.inertia, "hip_offsets": r.hip_offsets,
                      "nominal_feet": r.nominal_feet, "leg_length": r.leg_length, "f_n_max": r.f_n_max,
                      "gravity": r.gravity},
            "terrain": {"kind": t.kind, "mu": t.mu, "step_x": t.step_x, "step_height": t.step_height,
                        "step_length": t.step_length, "n_steps": t.n_steps, "wall_incline": t.wall_incline,
                        "half_gap": t.half_gap, "origin": np.asarray(t.origin), "resolution": t.resolution},
            "boundary": {"x_init": sc.x_init, "xdot_init": sc.xdot_init, "R_init": sc.R_init,
                         "omega_init": sc.omega_init, "p_init": sc.p_init, "x_final": sc.x_final,
                         "xdot_final": sc.xdot_final, "R_final": sc.R_final, "omega_final": sc.omega_final,
                         "T_total": sc.T_total},
            "solver": {"n_nodes": sc.n_nodes, "n_phase": sc.n_phase, "degree_feet": sc.degree_feet,
                       "degree_force": sc.degree_force, "mode": sc.mode.value, "seed": sc.seed,
                       "dt_min": sc.dt_min, "name": sc.name},
            "weights": {f"w{i}": v for i, v in enumerate(sc.weights.as_array(), start=1)},
        }
        if "heights_file" in self.values["terrain"]:
            resolved["terrain"]["heights_file"] = self.values["terrain"]["heights_file"]
        for key in ("max_iter", "line_search", "dt_metrics"):
            if key in solver:
                resolved["solver"][key] = solver[key]
        if sc.init_durations is not None:
            resolved["solver"]["init_durations"] = sc.init_durations
        lines = []
        for section in SECTIONS:
            lines.append(f"[{section}]")
            for key, value in resolved[section].items():
                lines.append(f"{key} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, np.ndarray):
        return ", ".join(format(float(v), ".17g") for v in value.reshape(-1))
    return str(value)


def _rotation(value) -> np.ndarray:
    v = np.asarray(value, dtype=float).reshape(-1)
    if v.size == 9:
        return v.reshape(3, 3)
    if v.size == 3:
        return exp_so3(v)
    raise ValueError("rotations are 9 matrix entries (row-major) or a 3-vector rotation vector")


def load(path, overrides=()) -> Config:
    """Read an INI file and apply ``section.field=value`` overrides."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"malformed config {path}: {exc}"]) from exc
    pending = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"override {item!r} must look like section.field=value"])
        key, raw = item.split("=", 1)
        pending.append((key.strip(), raw))
    cfg_parser_missing = any(not parser.has_option(*REQ) for REQ in REQUIRED)
    if cfg_parser_missing:
        # overrides may supply required fields
        for key, raw in pending:
            section, _, name = key.partition(".")
            if (section, name) in REQUIRED:
                if not parser.has_section(section):
                    parser.add_section(section)
                parser.set(section, name, raw)
    cfg = Config.from_parser(parser, base_dir=path.parent)
    for key, raw in pending:
        cfg.override(key, raw)
    return cfg


def scenario_config(scenario: Scenario, **solver) -> Config:
    """A Config that reproduces ``scenario`` (used for echoes of generated runs)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    cfg = Config({"robot": {"mass": scenario.robot.mass}, "terrain": {"kind": scenario.terrain.kind},
                  "solver": dict(solver)})
    parser.read_string(cfg.dump(scenario))
    return Config.from_parser(parser)


def replace_mode(scenario: Scenario, mode) -> Scenario:
    return replace(scenario, mode=ProblemMode(mode))
