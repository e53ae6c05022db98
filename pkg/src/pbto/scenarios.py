"""Scenario construction: terrains, boundary states, references, batches, warm starts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import TranslationalTrajectory, exp_so3, is_rotation, log_so3
from .model import RobotModel, Terrain
from .nlp.layout import CostWeights, DecisionVector, ProblemMode
from .phase import DT_MIN

NOMINAL_HEIGHT = 0.51
SWING_LIFT = 0.1


class ScenarioError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario: " + "; ".join(self.problems))


def _yaw(angle: float) -> np.ndarray:
    return exp_so3([0.0, 0.0, angle])


@dataclass(frozen=True)
class Scenario:
    robot: RobotModel = field(default_factory=RobotModel)
    terrain: Terrain = field(default_factory=Terrain)
    x_init: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, NOMINAL_HEIGHT]))
    xdot_init: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R_init: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega_init: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_init: np.ndarray | None = None
    x_final: np.ndarray = field(default_factory=lambda: np.array([3.0, 0.0, NOMINAL_HEIGHT]))
    xdot_final: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R_final: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega_final: np.ndarray = field(default_factory=lambda: np.zeros(3))
    T_total: float = 3.0
    n_nodes: int = 30
    n_phase: int = 7
    degree_feet: int = 4
    degree_force: int = 4
    weights: CostWeights = field(default_factory=CostWeights)
    mode: ProblemMode = ProblemMode.PROPOSED
    seed: int = 0
    init_durations: np.ndarray | None = None
    dt_min: float = DT_MIN
    name: str = "scenario"

    def __post_init__(self):
        for key in ("x_init", "xdot_init", "omega_init", "x_final", "xdot_final", "omega_final", "R_init", "R_final"):
            arr = np.array(getattr(self, key), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        if self.p_init is None:
            object.__setattr__(self, "p_init", nominal_feet(self.robot, self.terrain, self.x_init, self.R_init))
        p = np.array(self.p_init, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "p_init", p)
        if self.init_durations is not None:
            d = np.array(self.init_durations, dtype=float)
            if d.ndim == 1:
                d = np.tile(d, (self.robot.n_legs, 1))
            d.setflags(write=False)
            object.__setattr__(self, "init_durations", d)
        object.__setattr__(self, "mode", ProblemMode(self.mode))

    @property
    def dt(self) -> float:
        return self.T_total / (self.n_nodes - 1)

    @property
    def node_times(self) -> np.ndarray:
        return np.linspace(0.0, self.T_total, self.n_nodes)

    def with_mode(self, mode) -> "Scenario":
        return replace(self, mode=ProblemMode(mode))

    def validate(self) -> list[str]:
        problems = []
        L = self.robot.n_legs
        if self.n_phase < 1 or self.n_phase % 2 != 1:
            problems.append(f"n_phase must be a positive odd integer, got {self.n_phase}")
        if not self.T_total > 0:
            problems.append("T_total must be positive")
        if self.n_nodes < 2:
            problems.append("n_nodes must be at least 2")
        if self.degree_force < 0 or self.degree_feet < 2:
            problems.append("need degree_force >= 0 and degree_feet >= 2")
        for key in ("x_init", "xdot_init", "omega_init", "x_final", "xdot_final", "omega_final"):
            v = getattr(self, key)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                problems.append(f"{key} must be a finite 3-vector")
        for key in ("R_init", "R_final"):
            if not is_rotation(getattr(self, key)):
                problems.append(f"{key} must be a rotation matrix")
        if self.p_init.shape != (L, 3):
            problems.append(f"p_init must have shape ({L}, 3)")
        else:
            h = self.terrain.height(self.p_init[:, 0], self.p_init[:, 1])
            off = np.abs(self.p_init[:, 2] - h)
            if np.any(off > 1e-6):
                problems.append(f"initial feet are off the terrain by up to {off.max():.3g} m")
        if self.n_phase >= 1 and self.T_total > 0 and self.n_phase * self.dt_min > self.T_total:
            problems.append("n_phase * dt_min exceeds T_total")
        if self.init_durations is not None:
            d = self.init_durations
            if d.shape != (L, self.n_phase):
                problems.append(f"init_durations must have shape ({L}, {self.n_phase})")
            elif np.any(d < self.dt_min - 1e-12):
                problems.append("init_durations below dt_min")
        return problems

    def check(self) -> "Scenario":
        problems = self.validate()
        if problems:
            raise ScenarioError(problems)
        return self


def nominal_feet(robot: RobotModel, terrain: Terrain, x, R) -> np.ndarray:
    feet = np.asarray(x) + robot.nominal_feet @ np.asarray(R).T
    feet[:, 2] = terrain.height(feet[:, 0], feet[:, 1])
    return feet


def reference_at(scenario: Scenario, t):
    """Nominal body height (linear) and orientation (geodesic) at time ``t``."""
    s = np.clip(np.asarray(t, dtype=float) / scenario.T_total, 0.0, 1.0)
    z = (1 - s) * scenario.x_init[2] + s * scenario.x_final[2]
    delta = log_so3(scenario.R_init.T @ scenario.R_final)
    if np.ndim(s) == 0:
        return float(z), scenario.R_init @ exp_so3(s * delta)
    return z, np.array([scenario.R_init @ exp_so3(si * delta) for si in s])


def body_reference(scenario: Scenario, t) -> np.ndarray:
    """Straight-line body position between the boundary positions (warm start only)."""
    s = np.clip(np.asarray(t, dtype=float) / scenario.T_total, 0.0, 1.0)[..., None]
    return (1 - s) * scenario.x_init + s * scenario.x_final


def sample_durations(rng: np.random.Generator, n_legs: int, n_phase: int, total: float,
                     dt_min: float = DT_MIN, concentration: float = 5.0) -> np.ndarray:
    """Symmetric Dirichlet phase durations summing to ``total``, each at least ``dt_min``."""
    d = rng.dirichlet(np.full(n_phase, concentration), size=n_legs) * total
    for _ in range(50):
        low = d < dt_min
        if not low.any():
            break
        d = np.where(low, dt_min, d)
        free = ~low
        excess = d.sum(axis=1, keepdims=True) - total
        d = np.where(free, d - excess * d * free / (d * free).sum(axis=1, keepdims=True), d)
    return d


def initial_durations(scenario: Scenario) -> np.ndarray:
    if scenario.init_durations is not None:
        return np.array(scenario.init_durations, dtype=float)
    rng = np.random.default_rng(scenario.seed)
    return sample_durations(rng, scenario.robot.n_legs, scenario.n_phase, scenario.T_total, scenario.dt_min)


def leg_frames(scenario: Scenario) -> np.ndarray:
    """Surface frame rows (n, t1, t2) used for each leg's friction pyramid."""
    from .model import terrain_frame

    return np.array([terrain_frame(scenario.terrain, p[0], p[1]).matrix() for p in scenario.p_init])


def initial_guess(scenario: Scenario) -> DecisionVector:
    """Physically plausible warm start.

    Footholds follow the straight-line body reference, swing feet arc between
    them, stance legs share the body weight along their surface normals and
    segment states are propagated so that the position chain is continuous.
    """
    sc = scenario
    robot = sc.robot
    L, n_ph, K = robot.n_legs, sc.n_phase, sc.n_nodes
    n_st, n_sw = (n_ph + 1) // 2, n_ph // 2
    N, M = sc.degree_feet, sc.degree_force
    durations = initial_durations(sc)
    ends = np.cumsum(durations, axis=1)
    starts = ends - durations
    _, R_ref = reference_at(sc, sc.node_times)

    footholds = np.zeros((L, n_st, 3))
    for i in range(L):
        footholds[i, 0] = sc.p_init[i]
        for j in range(1, n_st):
            t_mid = starts[i, 2 * j] + 0.5 * durations[i, 2 * j]
            _, R = reference_at(sc, t_mid)
            p = body_reference(sc, t_mid) + R @ robot.nominal_feet[i]
            p[2] = sc.terrain.height(p[0], p[1])
            footholds[i, j] = p

    gamma = np.zeros((L, n_sw, N + 1, 3))
    u = np.linspace(0.0, 1.0, N + 1)
    for i in range(L):
        for j in range(n_sw):
            a, b = footholds[i, j], footholds[i, j + 1]
            gamma[i, j] = a + u[:, None] * (b - a)
            top = max(a[2], b[2]) + SWING_LIFT
            gamma[i, j, 1:-1, 2] = np.maximum(gamma[i, j, 1:-1, 2], top)

    frames = leg_frames(sc)
    alpha = np.zeros((L, n_st, M + 1, 3))
    g = np.linalg.norm(robot.gravity)
    for i in range(L):
        stance_time = durations[i, 0::2].sum()
        f_up = robot.mass * g * sc.T_total / (L * stance_time)
        n = frames[i, 0]
        alpha[i] = min(f_up / n[2], 0.9 * robot.f_n_max) * n

    chi = np.zeros((L, n_ph, 3))
    chi_dot = np.zeros((L, n_ph, 3))
    x_nodes = v_nodes = None
    if sc.mode == ProblemMode.PROPOSED:
        for q in range(1, n_ph):
            traj = TranslationalTrajectory(alpha, durations, chi, chi_dot, sc.x_init, sc.xdot_init,
                                           robot.mass, robot.gravity)
            for i in range(L):
                p, v = traj.legs[i][q - 1].end_state()
                chi[i, q] = np.reshape(p, 3)
                chi_dot[i, q] = np.reshape(v, 3)
    else:
        x_nodes = body_reference(sc, sc.node_times)
        v_nodes = np.tile((sc.x_final - sc.x_init) / sc.T_total, (K, 1))
        v_nodes[0] = sc.xdot_init
        v_nodes[-1] = sc.xdot_final
        chi = chi_dot = None

    return DecisionVector(alpha=alpha, gamma=gamma, durations=durations, dtheta=np.zeros((K, 3)),
                          omega=np.zeros((K, 3)), R_bar=R_ref, chi=chi, chi_dot=chi_dot,
                          x_nodes=x_nodes, v_nodes=v_nodes, scenario=sc)


def standing_solution(scenario: Scenario) -> DecisionVector:
    """Static equilibrium over a single full-horizon stance.

    Requires ``n_phase == 1`` and a stand-still scenario; every leg pushes
    with an equal vertical share of the weight.
    """
    sc = scenario
    if sc.n_phase != 1:
        raise ValueError("the standing solution needs n_phase == 1")
    L, K, M = sc.robot.n_legs, sc.n_nodes, sc.degree_force
    share = sc.robot.mass * -sc.robot.gravity / L
    alpha = np.broadcast_to(share, (L, 1, M + 1, 3)).copy()
    zeros = np.zeros((L, 1, 3))
    R = np.broadcast_to(sc.R_init, (K, 3, 3)).copy()
    dv = DecisionVector(alpha=alpha, gamma=np.zeros((L, 0, sc.degree_feet + 1, 3)),
                        durations=np.full((L, 1), sc.T_total), dtheta=np.zeros((K, 3)), omega=np.zeros((K, 3)),
                        R_bar=R, chi=zeros.copy(), chi_dot=zeros.copy(), scenario=sc)
    if sc.mode == ProblemMode.BASELINE:
        dv.chi = dv.chi_dot = None
        dv.x_nodes = np.tile(sc.x_init, (K, 1))
        dv.v_nodes = np.zeros((K, 3))
    return dv


def standing_scenario(**kw) -> Scenario:
    """Stand-still scenario whose feet sit symmetrically under the hips."""
    base = dict(x_final=np.array([0.0, 0.0, NOMINAL_HEIGHT]), n_phase=1)
    base.update(kw)
    return Scenario(**base)


# --- batches ---------------------------------------------------------------------

TERRAIN_PRESETS = {
    "plane": dict(kind="plane"),
    "block": dict(kind="block", step_x=1.5, step_height=0.5, n_steps=1),
    "stairs": dict(kind="stairs", step_x=1.0, step_height=0.2, step_length=1.0, n_steps=2),
    "chimney": dict(kind="chimney", wall_incline=np.pi / 4, half_gap=0.0),
}


def preset_terrain(name: str, mu: float = 1.0, **overrides) -> Terrain:
    if name not in TERRAIN_PRESETS:
        raise ValueError(f"unknown terrain preset {name!r}")
    params = dict(TERRAIN_PRESETS[name])
    params.update(overrides)
    return Terrain(mu=mu, **params)


def boundary_height(robot: RobotModel, terrain: Terrain, x, R) -> float:
    """Body height that keeps the feet at their nominal offset above the terrain."""
    feet = nominal_feet(robot, terrain, np.array([x[0], x[1], 0.0]), R)
    return float(feet[:, 2].mean() - (robot.nominal_feet[:, 2] @ np.ones(robot.n_legs)) / robot.n_legs)


@dataclass(frozen=True)
class BatchProtocol:
    count: int = 300
    seed: int = 0
    terrain: str = "plane"
    distance: float = 3.0
    T_total: float = 3.0
    vx_range: tuple[float, float] = (-0.5, 0.5)
    yaw_range_deg: tuple[float, float] = (-45.0, 45.0)
    mu_range: tuple[float, float] = (0.6, 1.0)
    dirichlet_concentration: float = 5.0
    base: Scenario = field(default_factory=Scenario)


def batch(protocol: BatchProtocol) -> list[Scenario]:
    """Randomized traverse scenarios, reproducible from ``protocol.seed``."""
    rng = np.random.default_rng(protocol.seed)
    base = protocol.base
    robot = base.robot
    out = []
    terrain_overrides = {}
    if base.terrain.kind == protocol.terrain:
        terrain_overrides = {k: getattr(base.terrain, k) for k in ("step_x", "step_height", "step_length",
                                                                   "n_steps", "wall_incline", "half_gap")}
    for idx in range(protocol.count):
        vx0, vx1 = rng.uniform(*protocol.vx_range, size=2)
        yaw0, yaw1 = np.deg2rad(rng.uniform(*protocol.yaw_range_deg, size=2))
        mu = rng.uniform(*protocol.mu_range)
        durations = sample_durations(rng, robot.n_legs, base.n_phase, protocol.T_total, base.dt_min,
                                     protocol.dirichlet_concentration)
        if protocol.terrain == "custom-heightfield":
            terrain = replace(base.terrain, mu=mu)
        else:
            terrain = preset_terrain(protocol.terrain, mu=mu, **terrain_overrides)
        R0, R1 = _yaw(yaw0), _yaw(yaw1)
        x0 = np.array([0.0, 0.0, 0.0])
        x1 = np.array([protocol.distance, 0.0, 0.0])
        x0[2] = boundary_height(robot, terrain, x0, R0)
        x1[2] = boundary_height(robot, terrain, x1, R1)
        out.append(replace(
            base, terrain=terrain, x_init=x0, x_final=x1, xdot_init=np.array([vx0, 0.0, 0.0]),
            xdot_final=np.array([vx1, 0.0, 0.0]), R_init=R0, R_final=R1, omega_init=np.zeros(3),
            omega_final=np.zeros(3), p_init=nominal_feet(robot, terrain, x0, R0), T_total=protocol.T_total,
            init_durations=durations, seed=protocol.seed * 100003 + idx,
            name=f"{protocol.terrain}-{protocol.seed}-{idx:04d}"))
    return out


def figure3_scenario(**kw) -> Scenario:
    """3 m bound on a plane with unit effective friction and zero boundary velocities."""
    params = dict(terrain=Terrain(kind="plane", mu=1.0), x_init=np.array([0.0, 0.0, 0.51]),
                  x_final=np.array([3.0, 0.0, 0.51]), name="figure3")
    params.update(kw)
    return Scenario(**params)
