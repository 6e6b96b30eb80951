"""Main step driver: model building, trial acceptance, merit line search and
quadratic-coefficient updates.

One iteration solves the equality/box subproblem at the current point, tests
the trial step against the model through the decrease margins ``rho`` and
``rho_beta``, runs a merit backtracking line search on the constraints, and
either takes the damped step or rejects the trial and inflates the quadratic
coefficient.  Inconsistent linearized constraints hand control to the
restoration loop in :mod:`bundlesqp.restoration`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    BacktrackExhausted,
    BoxBounds,
    IterationRecord,
    NonsmoothOracle,
    OracleFailure,
    OracleSample,
    Problem,
    SmoothConstraints,
    SolverConfig,
    evaluate_objective,
    kkt_residual,
    l1,
    linf,
    no_constraints,
)
from .qp import EqBoxQP, solve_eq_box


@dataclass
class QuadraticModel:
    """Convex local model ``r_k + g_k^T d + 0.5 d^T alpha_k d`` (alpha scalar or diagonal)."""

    r_k: float
    g_k: np.ndarray
    alpha_k: np.ndarray | float

    def value(self, d) -> float:
        d = np.asarray(d, dtype=float)
        return self.r_k + float(self.g_k @ d) + 0.5 * float(d @ (np.asarray(self.alpha_k) * d))


@dataclass
class SolveReport:
    final_x: np.ndarray
    status: str                 # converged | max_iters | restoration_critical_point | oracle_failure
    iterations: int
    serious_steps: int
    rejected_steps: int
    trace: list
    final_objective: float
    final_kkt_residual: float
    final_step_norm: float
    oracle_calls: int
    qp_solves: int              # trial-producing subproblem solves (= trace rows)
    kernel_solves: int          # every kernel invocation incl. phase-1/feasibility/pi search
    theta_final: float
    alpha_final: float
    pi_final: Optional[float] = None
    restoration_entries: int = 0
    delta_f_last: Optional[float] = None
    message: str = ""


@dataclass
class SolverState:
    """Mutable driver state shared with the restoration loop."""

    x: np.ndarray
    sample: OracleSample
    alpha: float | np.ndarray
    theta: float
    pi: Optional[float] = None
    k: int = 0
    serious_steps: int = 0
    rejected_steps: int = 0
    restoration_entries: int = 0
    after_restoration: bool = False
    eta_ratio: float = 0.5
    alpha_scalar: float = 1.0      # base coefficient in diagonal mode
    prev_point: Optional[tuple] = None
    last_delta: float = 0.0
    last_actual: float = 0.0
    kernel_solves: int = 0
    trace: list = field(default_factory=list)
    delta_f_last: Optional[float] = None
    oracle_base: int = 0


def predicted_decrease(model: QuadraticModel, d, beta: float = 1.0) -> float:
    """Model decrease of the damped step: ``-beta g^T d - 0.5 beta^2 d^T alpha d``."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    d = np.asarray(d, dtype=float)
    quad = float(d @ (np.asarray(model.alpha_k) * d))
    return -beta * float(model.g_k @ d) - 0.5 * beta * beta * quad


def acceptance_ratio(r_current: float, r_trial: float, delta: float,
                     eta_plus: float, eta_minus: float) -> float:
    """Margin between actual and scaled predicted decrease; accept iff > 0."""
    eta = eta_plus if delta >= 0 else eta_minus
    return (r_current - r_trial) - eta * delta


def merit(r_value: float, c_values, theta: float) -> float:
    """l1 merit ``r + theta * ||c||_1``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    return r_value + theta * l1(c_values)


def update_theta(theta_prev: float, lam, cfg: SolverConfig,
                 after_restoration: bool = False,
                 pi_prev: Optional[float] = None) -> float:
    """Merit parameter update; after restoration the floor is ``1/pi_prev``."""
    lam_inf = linf(lam)
    candidate = cfg.eta_gamma_minus * lam_inf + cfg.gamma
    if after_restoration:
        if pi_prev is None:
            raise ValueError("pi_prev required after a restoration step")
        return max(1.0 / pi_prev, candidate)
    return max(theta_prev, candidate)


def line_search(x_k, d_k, lam, theta: float, alpha: float,
                cons: SmoothConstraints, cfg: SolverConfig,
                beta_floor: float = 1e-16) -> float:
    """Backtracking on the constraint merit condition, halving from beta = 1.

    Returns the largest beta in {1, 1/2, 1/4, ...} with

        theta ||c(x)||_1 - eta_gamma_minus beta |lam^T c(x)|
            >= theta ||c(x + beta d)||_1 - eta_beta 0.5 alpha beta ||d||^2.
    """
    x_k = np.asarray(x_k, dtype=float)
    d_k = np.asarray(d_k, dtype=float)
    c_k, _ = cons.eval(x_k)
    base = theta * l1(c_k)
    lam_c = abs(float(np.dot(lam, c_k))) if cons.m else 0.0
    dd = float(d_k @ d_k)
    beta = 1.0
    while beta > beta_floor:
        c_trial, _ = cons.eval(x_k + beta * d_k)
        lhs = base - cfg.eta_gamma_minus * beta * lam_c
        rhs = theta * l1(c_trial) - cfg.eta_beta * 0.5 * alpha * beta * dd
        if lhs >= rhs:
            return beta
        beta *= 0.5
    raise BacktrackExhausted(
        "line search underflowed; constraint Hessian bound is likely violated",
        diagnostics={"theta": theta, "alpha": alpha, "step_norm_sq": dd,
                     "c_l1": l1(c_k)})


def _alpha_value(alpha) -> float:
    a = np.asarray(alpha, dtype=float)
    return float(a) if a.ndim == 0 else float(np.max(a))


def _ratio_alpha(model_r: float, g: np.ndarray, box_l, box_u, eta: float,
                 cfg: SolverConfig) -> float:
    """Smallest alpha whose model minimum over the step box stays above eta * r_k."""

    def box_min(a):
        d = np.clip(-g / a, box_l, box_u)
        return model_r + float(g @ d) + 0.5 * a * float(d @ d)

    target = eta * model_r
    lo, hi = cfg.alpha_min, cfg.alpha_max
    if box_min(hi) < target:
        return hi
    if box_min(lo) >= target:
        return lo
    for _ in range(80):
        mid = np.sqrt(lo * hi)
        if box_min(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def update_alpha(state: SolverState, accepted: bool, rho: float, history,
                 cfg: SolverConfig, box: Optional[BoxBounds] = None):
    """Next quadratic coefficient under the configured strategy.

    Every rejection inflates the coefficient by ``eta_alpha`` regardless of
    strategy; acceptance behaviour is strategy specific.
    """
    scalar = state.alpha_scalar

    def clamp(a):
        return float(np.clip(a, cfg.alpha_min, cfg.alpha_max))

    if not accepted:
        scalar = clamp(cfg.eta_alpha * scalar)
        if cfg.alpha_strategy == "ratio":
            state.eta_ratio = min(cfg.eta_alpha * state.eta_ratio, 1.0 - 1e-9)
            cand = _ratio_alpha(state.sample.value, state.sample.subgradient,
                                -state.x, box.upper - state.x, state.eta_ratio, cfg) \
                if box is not None else scalar
            scalar = clamp(max(cand, scalar))
    else:
        if cfg.alpha_strategy == "fixed-multiplicative" or cfg.alpha_strategy == "diagonal":
            if cfg.alpha_decrease and state.last_delta > 0:
                quality = state.last_actual / state.last_delta
                lo = cfg.alpha_decrease_threshold
                # shrink only when the model tracked the objective closely;
                # far above 1 the coefficient is load-bearing, not sloppy
                if lo <= quality <= 2.0 - lo:
                    scalar = clamp(scalar / cfg.eta_alpha)
        elif cfg.alpha_strategy == "bb":
            if history is not None:
                (x_prev, g_prev), (x_cur, g_cur) = history
                s = x_cur - x_prev
                y = g_cur - g_prev
                sy = float(s @ y)
                yy = float(y @ y)
                if yy > 0 and sy > 0:
                    scalar = clamp(sy / yy)
        elif cfg.alpha_strategy == "ratio":
            if box is not None:
                scalar = clamp(_ratio_alpha(state.sample.value, state.sample.subgradient,
                                            -state.x, box.upper - state.x,
                                            state.eta_ratio, cfg))
    state.alpha_scalar = scalar
    if cfg.alpha_strategy == "diagonal" and box is not None:
        tol = 1e-8 * (1.0 + box.width)
        at_bound = (state.x - box.lower <= tol) | (box.upper - state.x <= tol)
        return np.where(at_bound, cfg.diag_boost * scalar, scalar)
    return scalar


class _WorkProblem:
    """Problem re-based so the lower bound sits at the origin."""

    def __init__(self, problem: Problem):
        self.shift = problem.box.lower.copy()
        self.box = problem.box.shifted()
        self.oracle = problem.oracle
        self.user_box = problem.box
        cons = problem.cons()
        self.m = cons.m
        self.hessian_bound = cons.hessian_bound
        if cons.m:
            shift = self.shift
            self.cons = SmoothConstraints(
                cons.m, lambda z: cons.eval(z + shift), cons.hessian_bound)
        else:
            self.cons = no_constraints(self.box.n)

    def eval(self, z) -> OracleSample:
        return evaluate_objective(self.oracle, z + self.shift, self.user_box, tol=1e-9)


def _quad_form(alpha, d) -> float:
    return float(d @ (np.asarray(alpha) * d))


def _trace_kkt(work: _WorkProblem, x, g, sol, box, scale: float = 1.0,
               negate_lam: bool = True) -> float:
    lam = np.asarray(sol.lam, dtype=float)
    lam = (-lam if negate_lam else lam) * scale
    zl = np.maximum(sol.zeta_l * scale, 0.0)
    zu = np.maximum(sol.zeta_u * scale, 0.0)
    try:
        return kkt_residual(x, g, lam, zl, zu, work.cons, box)
    except ValueError:
        return float("nan")


def solve(problem: Problem, x0, cfg: SolverConfig | None = None) -> SolveReport:
    """Run the driver from ``x0``; see the module docstring for the loop shape."""
    from . import restoration as _restoration

    cfg = (cfg or SolverConfig()).validate()
    work = _WorkProblem(problem)
    box = work.box
    x0 = np.asarray(x0, dtype=float)
    if not problem.box.contains(x0, tol=1e-9):
        raise ValueError("x0 outside problem bounds")
    z = problem.box.clip(x0) - work.shift

    oracle_base = work.oracle.calls
    state = SolverState(x=z, sample=None, alpha=cfg.alpha0, theta=cfg.theta0,
                        eta_ratio=cfg.eta_ratio0, alpha_scalar=cfg.alpha0,
                        oracle_base=oracle_base)
    status = "max_iters"
    message = ""
    final_step_norm = float("nan")
    final_kkt = float("nan")

    try:
        state.sample = work.eval(z)
        state.prev_point = None
        last_sol = None
        while state.k < cfg.max_iters:
            x = state.x
            r_k = state.sample.value
            g_k = state.sample.subgradient
            c_k, jac_k = work.cons.eval(x)
            qp = EqBoxQP(g=g_k, alpha=state.alpha, A=jac_k, b=-c_k,
                         box=BoxBounds(box.lower - x, box.upper - x))
            sol = solve_eq_box(qp, cfg.qp_tol)
            state.kernel_solves += 1 + (1 if work.m else 0)  # phase-1 included
            if sol.status == "inconsistent":
                state.restoration_entries += 1
                outcome = _restoration.restore(state, work, cfg)
                if outcome.kind == "critical_point_exit":
                    status = "restoration_critical_point"
                    state.delta_f_last = outcome.delta_f
                    break
                if outcome.kind == "budget_exhausted":
                    status = "max_iters"
                    break
                state.after_restoration = True
                continue
            last_sol = sol
            d = sol.d
            step_norm = float(np.linalg.norm(d))
            if step_norm <= cfg.eps:
                status = "converged"
                final_step_norm = step_norm
                final_kkt = _trace_kkt(work, x, g_k, sol, box)
                break

            model = QuadraticModel(r_k, g_k, state.alpha)
            trial = work.eval(x + d)
            delta = predicted_decrease(model, d, 1.0)
            rho = acceptance_ratio(r_k, trial.value, delta, cfg.eta_l_plus, cfg.eta_l_minus)
            theta_prev = state.theta
            state.theta = update_theta(theta_prev, sol.lam, cfg,
                                       after_restoration=state.after_restoration,
                                       pi_prev=state.pi)
            state.after_restoration = False

            alpha_eff = (_quad_form(state.alpha, d) / (d @ d)) if step_norm > 0 else _alpha_value(state.alpha)
            accepted = False
            beta = 1.0
            next_sample = trial
            merit_drop = None
            if rho > 0:
                # box-only feasible sets need no damping: the merit condition
                # holds vacuously at beta = 1
                if work.m:
                    beta = line_search(x, d, sol.lam, state.theta, alpha_eff, work.cons, cfg)
                if beta != 1.0:
                    next_sample = work.eval(x + beta * d)
                delta_beta = predicted_decrease(model, d, beta)
                rho_beta = acceptance_ratio(r_k, next_sample.value, delta_beta,
                                            cfg.eta_gamma_plus, cfg.eta_gamma_minus)
                if rho_beta >= 0:
                    accepted = True

            state.last_delta = delta
            state.last_actual = r_k - trial.value
            if accepted:
                x_new = box.clip(x + beta * d)
                c_new, _ = work.cons.eval(x_new)
                merit_drop = (merit(r_k, c_k, state.theta)
                              - merit(next_sample.value, c_new, state.theta))
                history = ((state.x, state.sample.subgradient),
                           (x_new, next_sample.subgradient))
                state.prev_point = (state.x.copy(), state.sample.subgradient.copy())
                state.x = x_new
                state.sample = next_sample
                state.serious_steps += 1
                kind = "serious"
                row_x, row_g = x_new, next_sample.subgradient
                row_r, row_c = next_sample.value, c_new
            else:
                history = None
                state.rejected_steps += 1
                kind = "rejected"
                row_x, row_g = x, g_k
                row_r, row_c = r_k, c_k
            state.alpha = update_alpha(state, accepted, rho, history, cfg, box)

            state.trace.append(IterationRecord(
                k=state.k, step_kind=kind, r_value=row_r,
                merit_value=merit(row_r, row_c, state.theta),
                step_norm=step_norm, alpha=alpha_eff, beta=beta,
                theta=state.theta, pi=state.pi,
                kkt_residual=_trace_kkt(work, row_x, row_g, sol, box),
                oracle_calls=work.oracle.calls - oracle_base,
                c_l1=l1(row_c), delta=delta, rho=rho, merit_decrease=merit_drop))
            state.k += 1
    except OracleFailure as exc:
        status = "oracle_failure"
        message = str(exc)

    if status == "converged" and np.isnan(final_kkt) and last_sol is not None:
        final_kkt = _trace_kkt(work, state.x, state.sample.subgradient, last_sol, box)
    return SolveReport(
        final_x=state.x + work.shift,
        status=status,
        iterations=state.k,
        serious_steps=state.serious_steps,
        rejected_steps=state.rejected_steps,
        trace=state.trace,
        final_objective=state.sample.value if state.sample else float("nan"),
        final_kkt_residual=final_kkt,
        final_step_norm=final_step_norm,
        oracle_calls=work.oracle.calls - oracle_base,
        qp_solves=len(state.trace),
        kernel_solves=state.kernel_solves,
        theta_final=state.theta,
        alpha_final=_alpha_value(state.alpha),
        pi_final=state.pi,
        restoration_entries=state.restoration_entries,
        delta_f_last=state.delta_f_last,
        message=message,
    )
