"""Built-in benchmark problems.

Each factory returns a :class:`BenchmarkProblem` bundling the oracle, bounds,
constraints, starting point, per-problem config overrides and (when cheap to
state) an analytic reference.  The two parabola-set examples carry a large
smooth first-stage weight pulling toward (x2, x3) = (1/2, 0) plus the
squared-distance recourse to the nonconvex inner set; their first-stage term
f(x1) is identically zero, which leaves the x1 coordinate flat.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import BoxBounds, NonsmoothOracle, OracleSample, Problem, SmoothConstraints
from .twostage import (
    EXAMPLE1_Y_BOUNDS,
    EXAMPLE2_Y_BOUNDS,
    ParabolaSetInner,
    Scenario,
    SeparableBoxQPInner,
    aggregate_recourse,
    smooth_recourse,
)

FIRST_STAGE_WEIGHT = 1e5   # weight of the smooth (x2 - 1/2)^2 + x3^2 term
DEFAULT_SEED = 7

SOLVE_PROBLEMS = ("example1", "example2", "toy-linear-coupled",
                  "circle-restoration", "circle-critical", "qp-sanity")
DEMO_PROBLEMS = ("eg1-demo", "eg2-demo")
REGISTRY = SOLVE_PROBLEMS + DEMO_PROBLEMS


@dataclass
class BenchmarkProblem:
    name: str
    problem: Problem
    x0: np.ndarray
    config_overrides: dict = field(default_factory=dict)
    reference_objective: Optional[float] = None
    reference_x: Optional[np.ndarray] = None
    upper_c2_constant: Optional[float] = None
    scenarios: list = field(default_factory=list)
    mu: Optional[float] = None


def _example_problem(variant: str, mu_first: float, prefer_positive_y3: bool) -> BenchmarkProblem:
    bounds_y = EXAMPLE1_Y_BOUNDS if variant == "example1" else EXAMPLE2_Y_BOUNDS
    x_box = (BoxBounds([-5.0, 0.0, -1.0], [5.0, 50.0, 10.0]) if variant == "example1"
             else BoxBounds([-5.0, 0.0, -5.0], [5.0, 50.0, 5.0]))
    scenario = Scenario(W=np.eye(3), inner=ParabolaSetInner(bounds_y, prefer_positive_y3),
                        x_box=x_box)

    def eval_fn(x):
        rs = smooth_recourse(x, scenario, mu=1.0)
        smooth = mu_first * ((x[1] - 0.5) ** 2 + x[2] ** 2)
        g = rs.subgradient + np.array([0.0, 2.0 * mu_first * (x[1] - 0.5),
                                       2.0 * mu_first * x[2]])
        return OracleSample(rs.value + smooth, g, metadata=dict(rs.inner_status))

    # recourse constant mu * w^2 = 1 plus the smooth quadratic's curvature bound
    oracle = NonsmoothOracle(eval_fn, upper_c2_constant=mu_first + 1.0)
    return BenchmarkProblem(
        name=variant,
        problem=Problem(oracle, x_box, None, name=variant),
        x0=np.array([1.0, 50.0, 5.0]),
        config_overrides={"alpha0": 1.0, "eps": 1e-8},
        upper_c2_constant=mu_first + 1.0,
        scenarios=[scenario],
        mu=1.0,
    )


def _toy_scenarios(seed: int, K: int, n: int = 6, p: int = 4):
    rng = np.random.default_rng(seed)
    x_box = BoxBounds(np.zeros(n), np.ones(n))
    y_box = BoxBounds(-np.ones(p), np.ones(p))
    scenarios = []
    for _ in range(K):
        W = rng.normal(size=(p, n)) * (rng.random(size=(p, n)) < 0.6)
        norm = np.linalg.norm(W, 2)
        if norm > 0:
            W = 0.8 * W / norm
        q_lin = 0.3 * rng.normal(size=p)
        inner = SeparableBoxQPInner(np.ones(p), q_lin, y_box)
        scenarios.append(Scenario(W=W, inner=inner, x_box=x_box))
    return scenarios, x_box


def _toy_problem(seed: int, K: int, mu: float) -> BenchmarkProblem:
    scenarios, x_box = _toy_scenarios(seed, K)

    def eval_fn(x):
        value, g = aggregate_recourse(x, scenarios, mu)
        return OracleSample(value, g)

    c2 = mu * max(s.w ** 2 for s in scenarios)
    oracle = NonsmoothOracle(eval_fn, upper_c2_constant=c2)
    n = x_box.n
    a = np.full(n, 1.0 / n)
    cons = SmoothConstraints(1, lambda x: (np.array([a @ x - 0.45]), a.reshape(1, n)), 0.0)
    return BenchmarkProblem(
        name="toy-linear-coupled",
        problem=Problem(oracle, x_box, cons, name="toy-linear-coupled"),
        x0=np.full(n, 0.9),
        upper_c2_constant=c2,
        scenarios=scenarios,
        mu=mu,
    )


def _circle_problem(name: str, x0) -> BenchmarkProblem:
    target = np.array([0.9, 0.0])

    def eval_fn(x):
        return OracleSample(float(np.sum((x - target) ** 2)), 2.0 * (x - target))

    def cons_fn(x):
        return np.array([x[0] ** 2 + x[1] ** 2 - 1.0]), 2.0 * x.reshape(1, 2)

    oracle = NonsmoothOracle(eval_fn, upper_c2_constant=1.0)
    cons = SmoothConstraints(1, cons_fn, hessian_bound=1.0)
    box = BoxBounds([-2.0, -2.0], [2.0, 2.0])
    converges = name == "circle-restoration"
    return BenchmarkProblem(
        name=name,
        problem=Problem(oracle, box, cons, name=name),
        x0=np.asarray(x0, dtype=float),
        # nearest circle point to (0.9, 0) is (1, 0); the critical variant is
        # built to stop before reaching it, so it carries no reference
        reference_objective=0.01 if converges else None,
        reference_x=np.array([1.0, 0.0]) if converges else None,
        upper_c2_constant=1.0,
    )


def _qp_sanity_problem() -> BenchmarkProblem:
    def eval_fn(x):
        return OracleSample(float(x @ x), 2.0 * x)

    def cons_fn(x):
        return np.array([x[0] - 0.3]), np.array([[1.0, 0.0]])

    oracle = NonsmoothOracle(eval_fn, upper_c2_constant=1.0)
    cons = SmoothConstraints(1, cons_fn, hessian_bound=0.0)
    return BenchmarkProblem(
        name="qp-sanity",
        problem=Problem(oracle, BoxBounds([0.0, 0.0], [1.0, 1.0]), cons, name="qp-sanity"),
        x0=np.array([0.9, 0.8]),
        reference_objective=0.09,
        reference_x=np.array([0.3, 0.0]),
        upper_c2_constant=1.0,
    )


def make_problem(name: str, seed: int = DEFAULT_SEED, K: int = 4,
                 mu: Optional[float] = None, tie_break: str = "+") -> BenchmarkProblem:
    """Instantiate a registry problem; unknown names raise before any solve."""
    if name not in REGISTRY:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(REGISTRY)}")
    if name in DEMO_PROBLEMS:
        raise ValueError(f"{name} is a smoothing demo; use the sweep command")
    prefer_pos = tie_break != "-"
    if name == "example1":
        return _example_problem("example1", FIRST_STAGE_WEIGHT, prefer_pos)
    if name == "example2":
        return _example_problem("example2", FIRST_STAGE_WEIGHT, prefer_pos)
    if name == "toy-linear-coupled":
        return _toy_problem(seed, K, 10.0 if mu is None else mu)
    if name == "circle-restoration":
        return _circle_problem("circle-restoration", [0.05, 0.0])
    if name == "circle-critical":
        # zero constraint gradient at the start: the feasibility problem cannot
        # reduce the linearized violation, so restoration exits critically
        return _circle_problem("circle-critical", [0.0, 0.0])
    return _qp_sanity_problem()
