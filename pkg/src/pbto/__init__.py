"""Phase-based trajectory optimization for legged robots on a single rigid body model."""

from .model import RobotModel, Terrain
from .nlp import CostWeights, ProblemMode, assemble
from .scenarios import BatchProtocol, Scenario, batch, initial_guess
from .solver import SqpOptions, sqp

__version__ = "0.1.0"

__all__ = [
    "RobotModel", "Terrain", "CostWeights", "ProblemMode", "assemble", "BatchProtocol", "Scenario", "batch",
    "initial_guess", "SqpOptions", "sqp",
]
