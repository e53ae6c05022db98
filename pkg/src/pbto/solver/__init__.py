from .qp import QpOptions, QpProblem, QpSolution, solve_qp
from .solution import TrajectorySolution
from .sqp import SqpOptions, SqpReport, converged, relative_decrease, sqp

__all__ = [
    "QpOptions", "QpProblem", "QpSolution", "solve_qp", "TrajectorySolution",
    "SqpOptions", "SqpReport", "converged", "relative_decrease", "sqp",
]
