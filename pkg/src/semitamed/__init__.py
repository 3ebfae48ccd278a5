"""Semi-implicit tamed and dual tamed schemes for index-1 stochastic
differential-algebraic equations, with a coupled-path strong-convergence
harness."""

from .convergence import ConvergenceConfig, ConvergenceReport, fit_slope, strong_error
from .kernels import BACKEND
from .linalg import SingularSystem
from .model import SdaeProblem, builtin_paper_example, get_problem, validate_index1
from .scheme import SchemeKind, Trajectory, integrate, simulate
from .wiener import WienerGrid, coarsen, generate

__all__ = [
    "BACKEND",
    "ConvergenceConfig",
    "ConvergenceReport",
    "SchemeKind",
    "SdaeProblem",
    "SingularSystem",
    "Trajectory",
    "WienerGrid",
    "builtin_paper_example",
    "coarsen",
    "fit_slope",
    "generate",
    "get_problem",
    "integrate",
    "simulate",
    "strong_error",
    "validate_index1",
]
