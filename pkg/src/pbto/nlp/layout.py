"""Decision-vector layout and flat index bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np


class ProblemMode(str, Enum):
    PROPOSED = "proposed"
    BASELINE = "baseline"


@dataclass(frozen=True)
class CostWeights:
    w1: float = 10.0
    w2: float = 10.0
    w3: float = 0.1
    w4: float = 1.0
    w5: float = 0.05
    w6: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"weight {f.name} must be finite and non-negative, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass(frozen=True)
class Dimensions:
    n_legs: int
    n_phase: int
    n_nodes: int
    degree_feet: int
    degree_force: int
    mode: ProblemMode = ProblemMode.PROPOSED

    @property
    def n_stance(self) -> int:
        return (self.n_phase + 1) // 2

    @property
    def n_swing(self) -> int:
        return self.n_phase // 2


class IndexMap:
    """Ordered named blocks of the flat decision vector."""

    def __init__(self, dims: Dimensions):
        self.dims = dims
        L, K = dims.n_legs, dims.n_nodes
        blocks = [
            ("alpha", (L, dims.n_stance, dims.degree_force + 1, 3)),
            ("gamma", (L, dims.n_swing, dims.degree_feet + 1, 3)),
            ("durations", (L, dims.n_phase)),
            ("dtheta", (K, 3)),
            ("omega", (K, 3)),
        ]
        if dims.mode == ProblemMode.PROPOSED:
            blocks += [("chi", (L, dims.n_phase, 3)), ("chi_dot", (L, dims.n_phase, 3))]
        else:
            blocks += [("x_nodes", (K, 3)), ("v_nodes", (K, 3))]
        self.shapes = dict(blocks)
        self.offsets = {}
        offset = 0
        for name, shape in blocks:
            self.offsets[name] = offset
            offset += int(np.prod(shape))
        self.size = offset

    def names(self):
        return list(self.shapes)

    def slice(self, name) -> slice:
        start = self.offsets[name]
        return slice(start, start + int(np.prod(self.shapes[name])))

    def indices(self, name) -> np.ndarray:
        """Flat indices of block ``name`` shaped like the block."""
        sl = self.slice(name)
        return np.arange(sl.start, sl.stop).reshape(self.shapes[name])

    def index(self, name, *idx) -> int:
        return int(self.indices(name)[idx])

    def unflatten(self, z) -> dict:
        z = np.asarray(z)
        return {name: z[self.slice(name)].reshape(shape) for name, shape in self.shapes.items()}

    def flatten(self, parts: dict) -> np.ndarray:
        z = np.zeros(self.size)
        for name, shape in self.shapes.items():
            z[self.slice(name)] = np.asarray(parts[name], dtype=float).reshape(-1)
        return z

    def counts(self) -> dict:
        return {name: int(np.prod(shape)) for name, shape in self.shapes.items()}


@dataclass
class DecisionVector:
    """All optimization variables plus the SO(3) chart base ``R_bar``.

    Node orientations are ``R_k = R_bar_k Exp(dtheta_k)``.  After every
    retraction ``dtheta`` is folded into ``R_bar`` and reset to zero.
    """

    alpha: np.ndarray
    gamma: np.ndarray
    durations: np.ndarray
    dtheta: np.ndarray
    omega: np.ndarray
    R_bar: np.ndarray
    chi: np.ndarray | None = None
    chi_dot: np.ndarray | None = None
    x_nodes: np.ndarray | None = None
    v_nodes: np.ndarray | None = None
    scenario: object = field(default=None, repr=False, compare=False)

    def flat(self, index_map: IndexMap) -> np.ndarray:
        return index_map.flatten({name: getattr(self, name) for name in index_map.names()})

    @classmethod
    def from_flat(cls, z, R_bar, index_map: IndexMap, scenario=None) -> "DecisionVector":
        parts = {k: v.copy() for k, v in index_map.unflatten(z).items()}
        return cls(R_bar=np.array(R_bar, dtype=float), scenario=scenario, **parts)

    def rotations(self) -> np.ndarray:
        from ..dynamics import exp_so3

        return np.array([Rb @ exp_so3(d) for Rb, d in zip(self.R_bar, self.dtheta)])

    def copy(self) -> "DecisionVector":
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return replace(self, **kw)

    def footholds(self, p_init) -> np.ndarray:
        """Stance footholds, shape (n_legs, n_stance, 3)."""
        L = self.durations.shape[0]
        if self.gamma.shape[1] == 0:
            return np.asarray(p_init, dtype=float).reshape(L, 1, 3)
        return np.concatenate([self.gamma[:, :, 0], self.gamma[:, -1:, -1]], axis=1)
