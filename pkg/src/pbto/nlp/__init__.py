from .layout import CostWeights, DecisionVector, Dimensions, IndexMap, ProblemMode
from .problem import Linearization, NlpError, Problem, assemble, phi_values, random_decision

__all__ = [
    "CostWeights", "DecisionVector", "Dimensions", "IndexMap", "ProblemMode",
    "Linearization", "NlpError", "Problem", "assemble", "phi_values", "random_decision",
]
