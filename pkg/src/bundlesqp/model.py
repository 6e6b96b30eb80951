"""Problem definitions, oracle contracts, solver configuration and KKT diagnostics.

Everything downstream (the QP kernel, the step driver, the restoration loop and
the CLI) works with the types defined here.  Vectors are plain 1-D float64
numpy arrays; module boundaries reject NaN/Inf.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

ALPHA_STRATEGIES = ("fixed-multiplicative", "bb", "ratio", "diagonal")


class ShapeError(ValueError):
    """Dimension mismatch between vectors/matrices at a module boundary."""


class ConfigError(ValueError):
    """Solver configuration violates a required parameter ordering."""


class OracleFailure(RuntimeError):
    """Objective oracle returned a non-finite value or subgradient."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SolverBreakdown(RuntimeError):
    """Numerical breakdown inside the QP kernel (singular after regularization)."""


class BacktrackExhausted(RuntimeError):
    """Backtracking line search underflowed; usually a violated Hessian bound."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InnerSolveFailure(RuntimeError):
    """Second-stage (inner) solver failed to produce a usable minimizer."""


class LoopGuard(RuntimeError):
    """An iteration-bounded loop exceeded its guard (signals a degenerate input)."""


def as_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, rejecting NaN/Inf."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise ValueError(f"{name} has a non-finite entry at index {bad}")
    return v


def l1(v) -> float:
    return float(np.sum(np.abs(v))) if np.size(v) else 0.0


def linf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


@dataclass(frozen=True)
class BoxBounds:
    """Componentwise bounds ``lower <= x <= upper`` with strictly positive width."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower, "lower")
        hi = as_vector(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ShapeError("lower and upper must have the same length")
        if not np.all(lo < hi):
            raise ValueError("box requires lower_j < upper_j for all j")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.width))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def shifted(self) -> "BoxBounds":
        """Same box translated so the lower bound sits at the origin."""
        return BoxBounds(np.zeros_like(self.lower), self.width)


@dataclass
class OracleSample:
    """One oracle response: objective value, a Clarke subgradient, and extras."""

    value: float
    subgradient: np.ndarray
    metadata: dict = field(default_factory=dict)


class NonsmoothOracle:
    """Wraps ``x -> OracleSample`` and counts evaluations.

    ``upper_c2_constant`` is the constant C such that
    ``r(x) - r(xbar) - g(xbar)^T (x - xbar) <= C ||x - xbar||^2`` on the domain,
    when known (quadratic-penalty recourse functions have C = mu * w**2).
    """

    def __init__(self, eval_fn: Callable[[np.ndarray], OracleSample],
                 upper_c2_constant: Optional[float] = None):
        self._eval_fn = eval_fn
        self.upper_c2_constant = upper_c2_constant
        self.calls = 0

    def raw_eval(self, x: np.ndarray) -> OracleSample:
        return self._eval_fn(np.asarray(x, dtype=float))


def evaluate_objective(oracle: NonsmoothOracle, x, box: Optional[BoxBounds] = None,
                       tol: float = 1e-12) -> OracleSample:
    """Evaluate the oracle at ``x`` with boundary validation.

    Increments the oracle's call counter.  Non-finite values or subgradient
    entries raise :class:`OracleFailure` carrying the offending coordinate.
    """
    x = as_vector(x, "x")
    if box is not None and not box.contains(x, tol=tol):
        raise ValueError("x outside box bounds beyond tolerance")
    sample = oracle.raw_eval(x)
    oracle.calls += 1
    value = float(sample.value)
    if not np.isfinite(value):
        raise OracleFailure("oracle returned non-finite objective value", index=None)
    g = np.atleast_1d(np.asarray(sample.subgradient, dtype=float))
    if g.shape != x.shape:
        raise ShapeError(f"subgradient shape {g.shape} does not match x shape {x.shape}")
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise OracleFailure("oracle returned non-finite subgradient entry", index=bad)
    return OracleSample(value, g, sample.metadata)


@dataclass
class SmoothConstraints:
    """Smooth equality constraints ``c(x) = 0`` with a dense Jacobian.

    ``eval_fn`` maps x to ``(c, J)`` where c has length m and J is the (m, n)
    Jacobian whose rows are the constraint gradients.  ``hessian_bound`` is a
    constant H with ``0.5 * d^T H_j d <= H * ||d||^2`` for every constraint
    Hessian H_j (zero for affine constraints).
    """

    m: int
    eval_fn: Callable[[np.ndarray], tuple]
    hessian_bound: float = 0.0

    def eval(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        c, jac = self.eval_fn(x)
        c = np.atleast_1d(np.asarray(c, dtype=float))
        jac = np.asarray(jac, dtype=float).reshape(self.m, x.size)
        if c.shape != (self.m,):
            raise ShapeError(f"constraint value shape {c.shape}, expected ({self.m},)")
        return c, jac


def no_constraints(n: int) -> SmoothConstraints:
    """The empty constraint block (m = 0)."""
    return SmoothConstraints(0, lambda x: (np.zeros(0), np.zeros((0, n))), 0.0)


@dataclass
class Problem:
    """A box-bounded problem: minimize r(x) s.t. c(x) = 0, lower <= x <= upper.

    Bounds are given in the user's frame; the driver shifts them internally so
    the lower bound sits at zero and shifts the reported iterates back.
    """

    oracle: NonsmoothOracle
    box: BoxBounds
    constraints: Optional[SmoothConstraints] = None
    name: str = ""

    def cons(self) -> SmoothConstraints:
        return self.constraints if self.constraints is not None else no_constraints(self.box.n)


@dataclass
class SolverConfig:
    """Driver parameters.  Defaults satisfy all required orderings.

    ``alpha_decrease`` enables the practical rule of shrinking the quadratic
    coefficient after well-predicted accepted steps; ``alpha_decrease_threshold``
    is the lower edge of the model-quality window that triggers it.
    """

    eta_l_plus: float = 0.5
    eta_l_minus: float = 1.5
    eta_beta: float = 0.1
    eta_gamma_plus: float = 0.5
    eta_gamma_minus: float = 1.5
    eta_alpha: float = 2.0
    gamma: float = 1e-3
    eps: float = 1e-8
    alpha0: float = 1.0
    alpha_min: float = 1e-8
    alpha_max: float = 1e12
    eta_pi: float = 0.5
    eta_f: float = 0.1
    eps_f: float = 1e-10
    max_iters: int = 1000
    alpha_strategy: str = "fixed-multiplicative"
    theta0: Optional[float] = None
    alpha_decrease: bool = True
    alpha_decrease_threshold: float = 0.9
    eta_ratio0: float = 0.5
    diag_boost: float = 10.0
    qp_tol: float = 1e-9

    def __post_init__(self):
        if self.theta0 is None:
            self.theta0 = self.gamma

    def validate(self) -> "SolverConfig":
        c = self
        checks = [
            (0.0 < c.eta_l_plus <= 1.0, "0 < eta_l_plus <= 1"),
            (c.eta_l_minus >= 1.0, "eta_l_minus >= 1"),
            (0.0 < c.eta_beta < c.eta_gamma_plus <= 1.0, "0 < eta_beta < eta_gamma_plus <= 1"),
            (c.eta_gamma_minus >= 1.0, "eta_gamma_minus >= 1"),
            (c.eta_alpha > 1.0, "eta_alpha > 1"),
            (c.gamma > 0.0, "gamma > 0"),
            (0.0 < c.eta_pi < 1.0, "0 < eta_pi < 1"),
            (0.0 < c.eta_f < 1.0, "0 < eta_f < 1"),
            (c.eps_f >= 0.0, "eps_f >= 0"),
            (c.eps > 0.0, "eps > 0"),
            (c.alpha0 > 0.0, "alpha0 > 0"),
            (0.0 < c.alpha_min <= c.alpha0 <= c.alpha_max, "alpha_min <= alpha0 <= alpha_max"),
            (c.max_iters >= 1, "max_iters >= 1"),
            (c.alpha_strategy in ALPHA_STRATEGIES,
             f"alpha_strategy must be one of {ALPHA_STRATEGIES}"),
            (c.theta0 > 0.0, "theta0 > 0"),
            (0.0 < c.alpha_decrease_threshold <= 1.0, "0 < alpha_decrease_threshold <= 1"),
            (0.0 < c.eta_ratio0 < 1.0, "0 < eta_ratio0 < 1"),
            (c.diag_boost >= 1.0, "diag_boost >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


STEP_KINDS = ("serious", "rejected", "restoration-serious", "restoration-rejected")


@dataclass
class IterationRecord:
    """One trial step (one trial-producing QP solve) in the solve trace."""

    k: int
    step_kind: str
    r_value: float
    merit_value: float
    step_norm: float
    alpha: float
    beta: float
    theta: float
    pi: Optional[float]
    kkt_residual: float
    oracle_calls: int
    # extra diagnostics kept on the record object (not part of the CSV schema)
    c_l1: float = 0.0
    delta: float = 0.0
    rho: float = 0.0
    merit_decrease: Optional[float] = None


def kkt_residual(x, g, lam, zeta_l, zeta_u, cons: SmoothConstraints,
                 box: BoxBounds) -> float:
    """Residual of the first-order conditions at ``x`` in the zero-lower frame.

    Stationarity is measured as ``||g + J^T lam - zeta_l + zeta_u||_inf`` with
    J the constraint Jacobian, together with equality feasibility ``||c||_inf``
    and the bound complementarity products ``|zeta_l_j * x_j|`` and
    ``|zeta_u_j * (x_j - upper_j)|``.  The bound multipliers must be
    nonnegative.
    """
    x = as_vector(x, "x")
    g = as_vector(g, "g")
    lam = np.atleast_1d(np.asarray(lam, dtype=float)) if np.size(lam) else np.zeros(0)
    zeta_l = as_vector(zeta_l, "zeta_l") if np.size(zeta_l) else np.zeros(x.size)
    zeta_u = as_vector(zeta_u, "zeta_u") if np.size(zeta_u) else np.zeros(x.size)
    if g.shape != x.shape or zeta_l.shape != x.shape or zeta_u.shape != x.shape:
        raise ShapeError("g, zeta_l, zeta_u must match the dimension of x")
    if lam.shape != (cons.m,):
        raise ShapeError(f"lambda has shape {lam.shape}, expected ({cons.m},)")
    if np.any(zeta_l < 0) or np.any(zeta_u < 0):
        raise ValueError("bound multipliers must be nonnegative")
    c, jac = cons.eval(x)
    stat = g - zeta_l + zeta_u
    if cons.m:
        stat = stat + jac.T @ lam
    comp_l = linf(zeta_l * x)
    comp_u = linf(zeta_u * (x - box.upper))
    return max(linf(stat), linf(c), comp_l, comp_u)
