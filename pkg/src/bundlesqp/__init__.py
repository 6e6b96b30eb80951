"""Bundle-SQP solver for nonsmooth nonconvex box/equality constrained problems.

The package couples a single-point convex quadratic model of a nonsmooth
objective with linearized equality constraints, an l1 merit line search, a
penalty-based consistency restoration fallback, and quadratic-penalty
smoothing utilities for two-stage problems whose recourse values are the
nonsmooth part.
"""

from .bundle import SolveReport, solve
from .model import (
    BoxBounds,
    NonsmoothOracle,
    OracleSample,
    Problem,
    SmoothConstraints,
    SolverConfig,
    evaluate_objective,
    kkt_residual,
)
from .problems import REGISTRY, make_problem
from .twostage import Scenario, aggregate_recourse, smooth_recourse, smoothing_demo

__all__ = [
    "BoxBounds",
    "NonsmoothOracle",
    "OracleSample",
    "Problem",
    "REGISTRY",
    "Scenario",
    "SmoothConstraints",
    "SolveReport",
    "SolverConfig",
    "aggregate_recourse",
    "evaluate_objective",
    "kkt_residual",
    "make_problem",
    "smooth_recourse",
    "smoothing_demo",
    "solve",
]

__version__ = "0.1.0"
