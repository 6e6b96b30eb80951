"""Consistency restoration: the penalty fallback entered when the linearized
constraints admit no feasible step.

Each cycle solves the l1 feasibility problem to measure the attainable
decrease of the linearized violation, exits at a critical point of that
violation when nothing is attainable, otherwise shrinks the penalty parameter
until the penalty step achieves a fixed fraction of the feasibility decrease,
and then runs the usual trial acceptance with unit decrease thresholds and a
penalty-merit line search.  A serious step hands control back to the main
driver.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bundle import QuadraticModel, predicted_decrease, update_alpha
from .model import (
    BacktrackExhausted,
    BoxBounds,
    IterationRecord,
    LoopGuard,
    SmoothConstraints,
    SolverConfig,
    kkt_residual,
    l1,
)
from .qp import EqBoxQP, PenaltyQP, solve_feasibility_l1, solve_penalty


@dataclass
class RestorationOutcome:
    kind: str                    # serious_step | critical_point_exit | budget_exhausted
    x_next: Optional[np.ndarray]
    pi_final: float
    iterations_used: int
    delta_f: float


def penalty_predicted_decrease(model: QuadraticModel, d, pi: float, c_values,
                               jac) -> float:
    """Predicted decrease of the penalty objective:
    ``pi (-g^T d - 0.5 d^T alpha d) + ||c||_1 - ||c + J d||_1``.
    """
    if not pi > 0:
        raise ValueError("pi must be positive")
    d = np.asarray(d, dtype=float)
    c = np.asarray(c_values, dtype=float)
    jac = np.asarray(jac, dtype=float).reshape(c.size, d.size)
    return pi * predicted_decrease(model, d, 1.0) + l1(c) - l1(c + jac @ d)


def update_pi(pi_in: float, model: QuadraticModel, x_k, c_values, jac,
              box: BoxBounds, cfg: SolverConfig, delta_f: Optional[float] = None,
              tol: float = 1e-9, max_cuts: int = 200):
    """Shrink pi until the penalty step achieves ``eta_f * delta_f``.

    Returns ``(pi, solution, delta_pi)`` for the first accepted pi.  The loop
    terminates whenever ``delta_f > 0``; a guard trips after ``max_cuts``
    reductions, which signals a near-critical feasibility decrease.
    """
    c = np.asarray(c_values, dtype=float)
    jac = np.asarray(jac, dtype=float).reshape(c.size, -1)
    solves = 0
    if delta_f is None:
        _, delta_f = solve_feasibility_l1(jac, -c, box, tol)
        solves += 1
    pi = float(pi_in)
    for _ in range(max_cuts):
        sol = solve_penalty(PenaltyQP(
            EqBoxQP(g=model.g_k, alpha=model.alpha_k, A=jac, b=-c, box=box), pi), tol)
        solves += 1
        delta_pi = penalty_predicted_decrease(model, sol.d, pi, c, jac)
        if delta_pi >= cfg.eta_f * delta_f:
            return pi, sol, delta_pi, solves
        pi *= cfg.eta_pi
    raise LoopGuard("penalty parameter search exceeded its guard; "
                    f"delta_f={delta_f:.3e} is effectively critical")


def restoration_line_search(x_k, d_k, lam, pi: float, alpha: float,
                            cons: SmoothConstraints, cfg: SolverConfig,
                            beta_floor: float = 1e-16) -> float:
    """Backtracking on the penalty-merit condition, halving from beta = 1:

        (1/pi) ||c(x)||_1 + (beta/pi) lam^T (J d)
            >= (1/pi) ||c(x + beta d)||_1 - eta_beta 0.5 alpha beta ||d||^2.
    """
    if not pi > 0:
        raise ValueError("pi must be positive")
    x_k = np.asarray(x_k, dtype=float)
    d_k = np.asarray(d_k, dtype=float)
    c_k, jac_k = cons.eval(x_k)
    slope = float(np.dot(lam, jac_k @ d_k)) if cons.m else 0.0
    base = l1(c_k) / pi
    dd = float(d_k @ d_k)
    beta = 1.0
    while beta > beta_floor:
        c_trial, _ = cons.eval(x_k + beta * d_k)
        lhs = base + beta * slope / pi
        rhs = l1(c_trial) / pi - cfg.eta_beta * 0.5 * alpha * beta * dd
        if lhs >= rhs:
            return beta
        beta *= 0.5
    raise BacktrackExhausted(
        "restoration line search underflowed",
        diagnostics={"pi": pi, "alpha": alpha, "step_norm_sq": dd})


def _restoration_kkt(work, x, g, sol, pi, box) -> float:
    lam = np.asarray(sol.lam, dtype=float) / pi
    zl = np.maximum(sol.zeta_l / pi, 0.0)
    zu = np.maximum(sol.zeta_u / pi, 0.0)
    try:
        return kkt_residual(x, g, lam, zl, zu, work.cons, box)
    except ValueError:
        return float("nan")


def restore(state, work, cfg: SolverConfig) -> RestorationOutcome:
    """Run restoration cycles at ``state.x`` until a serious step or an exit.

    Mutates the driver state in place: iterate, oracle sample, alpha, pi,
    counters and trace rows (one row per trial-producing penalty solve).
    """
    box = work.box
    theta = state.theta
    pi = 1.0 / theta if state.pi is None else min(state.pi, 1.0 / theta)
    used = 0
    while state.k < cfg.max_iters:
        x = state.x
        r_k = state.sample.value
        g_k = state.sample.subgradient
        c_k, jac_k = work.cons.eval(x)
        dbox = BoxBounds(box.lower - x, box.upper - x)
        _, delta_f = solve_feasibility_l1(jac_k, -c_k, dbox, cfg.qp_tol)
        state.kernel_solves += 1
        state.delta_f_last = delta_f
        if delta_f <= cfg.eps_f:
            # critical point of the linearized constraint violation
            state.pi = pi
            return RestorationOutcome("critical_point_exit", None, pi, used, delta_f)

        model = QuadraticModel(r_k, g_k, state.alpha)
        pi, sol, delta_pi, n_solves = update_pi(pi, model, x, c_k, jac_k, dbox, cfg,
                                                delta_f=delta_f, tol=cfg.qp_tol)
        state.kernel_solves += n_solves
        state.pi = pi
        d = sol.d
        step_norm = float(np.linalg.norm(d))
        trial = work.eval(x + d)
        delta = predicted_decrease(model, d, 1.0)
        # unit thresholds on both margins inside restoration
        rho = (r_k - trial.value) - delta

        alpha_eff = (float(d @ (np.asarray(state.alpha) * d)) / (d @ d)
                     if step_norm > 0 else float(np.max(np.asarray(state.alpha))))
        accepted = False
        beta = 1.0
        next_sample = trial
        merit_drop = None
        if rho > 0:
            beta = restoration_line_search(x, d, sol.lam, pi, alpha_eff, work.cons, cfg)
            if beta != 1.0:
                next_sample = work.eval(x + beta * d)
            delta_beta = predicted_decrease(model, d, beta)
            rho_beta = (r_k - next_sample.value) - delta_beta
            if rho_beta >= 0:
                accepted = True

        state.last_delta = delta
        state.last_actual = r_k - trial.value
        if accepted:
            x_new = box.clip(x + beta * d)
            c_new, _ = work.cons.eval(x_new)
            merit_drop = (r_k + l1(c_k) / pi) - (next_sample.value + l1(c_new) / pi)
            state.prev_point = (state.x.copy(), state.sample.subgradient.copy())
            state.x = x_new
            state.sample = next_sample
            state.serious_steps += 1
            kind = "restoration-serious"
            row_x, row_g = x_new, next_sample.subgradient
            row_r, row_c = next_sample.value, c_new
        else:
            state.rejected_steps += 1
            kind = "restoration-rejected"
            row_x, row_g = x, g_k
            row_r, row_c = r_k, c_k
            state.alpha = update_alpha(state, False, rho, None, cfg, box)

        state.trace.append(IterationRecord(
            k=state.k, step_kind=kind, r_value=row_r,
            merit_value=row_r + l1(row_c) / pi,
            step_norm=step_norm, alpha=alpha_eff, beta=beta,
            theta=state.theta, pi=pi,
            kkt_residual=_restoration_kkt(work, row_x, row_g, sol, pi, box),
            oracle_calls=work.oracle.calls - state.oracle_base,
            c_l1=l1(row_c), delta=delta, rho=rho, merit_decrease=merit_drop))
        state.k += 1
        used += 1
        if accepted:
            return RestorationOutcome("serious_step", state.x.copy(), pi, used, delta_f)
    return RestorationOutcome("budget_exhausted", None, pi, used,
                              state.delta_f_last if state.delta_f_last is not None else 0.0)
