"""Convex subproblem kernel.

Three problems share one primal-dual interior-point kernel with a diagonal
Hessian and dense normal equations:

* the equality/box subproblem
      min  g^T d + 0.5 d^T diag(alpha) d   s.t.  A d = b,  dl <= d <= du
* its l1-penalty relaxation in slack form (v, w >= 0)
      min  pi (g^T d + 0.5 d^T diag(alpha) d) + sum(v + w)
      s.t. A d - v + w = b,  dl <= d <= du
* the l1 feasibility problem, the pi -> 0 limit of the penalty problem, with a
  tiny quadratic regularization on d so ties break to the minimum-norm point.

Multiplier conventions follow the optimality systems of the three problems:
the equality/box solve satisfies ``g + alpha d - A^T lam - zl + zu = 0`` while
the penalty solve satisfies ``pi (g + alpha d) + A^T lam - zl + zu = 0``, so
penalty multipliers obey ``lam_j = sign(c_j + a_j^T d)`` on rows with nonzero
linearized residual and ``|lam_j| <= 1`` otherwise.

After the interior-point iteration converges, the active set it identifies is
refined by a direct linear solve ("polish"); the polished point is returned
only when it verifies primal/dual feasibility, which drives KKT residuals to
linear-algebra precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import BoxBounds, ShapeError, SolverBreakdown, as_vector, l1, linf

_FEAS_REG = 1e-10     # tie-break regularization on d in the feasibility problem
_IP_MAX_ITER = 50


@dataclass
class EqBoxQP:
    """Data of the equality/box subproblem; ``alpha`` may be scalar or diagonal."""

    g: np.ndarray
    alpha: np.ndarray | float
    A: np.ndarray
    b: np.ndarray
    box: BoxBounds

    def __post_init__(self):
        self.g = as_vector(self.g, "g")
        n = self.g.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(self.A.shape[0])
        alpha = np.asarray(self.alpha, dtype=float)
        self.alpha = np.full(n, float(alpha)) if alpha.ndim == 0 else as_vector(alpha, "alpha")
        if self.alpha.size != n:
            raise ShapeError("diagonal alpha must match the dimension of g")
        if np.any(self.alpha <= 0):
            raise ValueError("alpha entries must be strictly positive")
        if self.box.n != n:
            raise ShapeError("box dimension must match g")

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, d) -> float:
        d = np.asarray(d, dtype=float)
        return float(self.g @ d + 0.5 * d @ (self.alpha * d))


@dataclass
class PenaltyQP:
    base: EqBoxQP
    pi: float

    def __post_init__(self):
        if not self.pi > 0:
            raise ValueError("penalty parameter pi must be positive")

    def objective(self, d, v, w) -> float:
        return self.pi * self.base.objective(d) + float(np.sum(v) + np.sum(w))


@dataclass
class QPSolution:
    d: np.ndarray
    lam: np.ndarray
    zeta_l: np.ndarray
    zeta_u: np.ndarray
    status: str                      # "optimal" | "inconsistent"
    v: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    kkt_residual: float = np.inf
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)


def _interior_start(lb, ub):
    fin = np.isfinite(ub)
    z = np.where(fin, 0.5 * (lb + ub), lb + 1.0)
    gap = np.where(fin, ub - lb, np.inf)
    margin = np.minimum(1.0, 0.25 * gap)
    return np.clip(z, lb + margin, np.where(fin, ub - margin, np.inf))


def _solve_normal(M, rhs, reg0):
    """Dense solve with escalating Tikhonov jitter; raises on persistent failure."""
    reg = 0.0
    for _ in range(8):
        try:
            sol = np.linalg.solve(M + reg * np.eye(M.shape[0]), rhs)
            if np.all(np.isfinite(sol)):
                return sol
        except np.linalg.LinAlgError:
            pass
        reg = reg0 if reg == 0.0 else reg * 100.0
    raise SolverBreakdown("normal equations remained singular after regularization")


def _ip_solve(q_diag, q_lin, G, rhs, lb, ub, tol):
    """Mehrotra predictor-corrector for a diagonal-Hessian QP with equality rows
    and (possibly one-sided) box bounds.  Returns the final primal/dual point.
    """
    n = q_lin.size
    m = rhs.size
    fin_u = np.isfinite(ub)
    z = _interior_start(lb, ub)
    sl = z - lb
    su = np.where(fin_u, ub - z, 1.0)
    zl = np.ones(n)
    zu = np.where(fin_u, 1.0, 0.0)
    y = np.zeros(m)
    scale = 1.0 + linf(q_lin) + (linf(rhs) if m else 0.0)
    n_comp = n + int(np.count_nonzero(fin_u))
    reg0 = 1e-14 * (1.0 + (np.trace(G @ G.T) if m else 0.0))
    it = 0
    converged = False
    for it in range(1, _IP_MAX_ITER + 1):
        zu_eff = np.where(fin_u, zu, 0.0)
        rd = q_diag * z + q_lin - (G.T @ y if m else 0.0) - zl + zu_eff
        rp = (G @ z - rhs) if m else np.zeros(0)
        comp_l = sl * zl
        comp_u = np.where(fin_u, su * zu, 0.0)
        mu = (comp_l.sum() + comp_u.sum()) / n_comp
        res = max(linf(rd), linf(rp) if m else 0.0, linf(comp_l), linf(comp_u))
        if res <= tol * scale:
            converged = True
            break
        theta = q_diag + zl / sl + np.where(fin_u, zu / su, 0.0)
        inv_theta = 1.0 / theta

        def _direction(sigma_mu, corr_l, corr_u):
            rhat = rd + (comp_l - sigma_mu + corr_l) / sl \
                - np.where(fin_u, (comp_u - sigma_mu + corr_u) / np.where(fin_u, su, 1.0), 0.0)
            if m:
                M = (G * inv_theta) @ G.T
                dy = _solve_normal(M, -rp + G @ (inv_theta * rhat), reg0)
                dz = inv_theta * (G.T @ dy - rhat)
            else:
                dy = np.zeros(0)
                dz = -inv_theta * rhat
            dzl = -(comp_l - sigma_mu + corr_l) / sl - (zl / sl) * dz
            dzu = np.where(fin_u,
                           -(comp_u - sigma_mu + corr_u) / np.where(fin_u, su, 1.0)
                           + np.where(fin_u, zu / np.where(fin_u, su, 1.0), 0.0) * dz,
                           0.0)
            return dz, dy, dzl, dzu

        def _max_step(dz, dzl, dzu):
            alpha = 1.0
            neg = dz < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-sl[neg] / dz[neg]))
            pos = fin_u & (dz > 0)
            if np.any(pos):
                alpha = min(alpha, np.min(su[pos] / dz[pos]))
            neg = dzl < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-zl[neg] / dzl[neg]))
            neg = fin_u & (dzu < 0)
            if np.any(neg):
                alpha = min(alpha, np.min(-zu[neg] / dzu[neg]))
            return alpha

        # affine predictor
        dz_a, dy_a, dzl_a, dzu_a = _direction(0.0, 0.0, 0.0)
        a_aff = _max_step(dz_a, dzl_a, dzu_a)
        mu_aff = ((sl + a_aff * dz_a) @ (zl + a_aff * dzl_a)
                  + np.sum(np.where(fin_u, (su - a_aff * dz_a) * (zu + a_aff * dzu_a), 0.0))) / n_comp
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        corr_l = dz_a * dzl_a
        corr_u = np.where(fin_u, -dz_a * dzu_a, 0.0)
        dz, dy, dzl, dzu = _direction(sigma * mu, corr_l, corr_u)
        tau = 0.995 if mu > 1e-8 * scale else 0.9995
        a = tau * _max_step(dz, dzl, dzu)
        z = z + a * dz
        y = y + a * dy
        zl = np.maximum(zl + a * dzl, 1e-300)
        zu = np.where(fin_u, np.maximum(zu + a * dzu, 1e-300), 0.0)
        sl = np.maximum(z - lb, 1e-300)
        su = np.where(fin_u, np.maximum(ub - z, 1e-300), 1.0)
    return {"z": z, "y": y, "zl": zl, "zu": np.where(fin_u, zu, 0.0),
            "iterations": it, "converged": converged}


def _eqbox_kkt_residual(qp: EqBoxQP, d, lam, zl, zu) -> float:
    stat = qp.g + qp.alpha * d - (qp.A.T @ lam if qp.m else 0.0) - zl + zu
    prim = linf(qp.A @ d - qp.b) if qp.m else 0.0
    box = qp.box
    comp = max(linf(zl * (d - box.lower)), linf(zu * (box.upper - d)))
    viol = max(linf(np.minimum(d - box.lower, 0.0)), linf(np.minimum(box.upper - d, 0.0)),
               linf(np.minimum(zl, 0.0)), linf(np.minimum(zu, 0.0)))
    return max(linf(stat), prim, comp, viol)


def _polish_eqbox(qp: EqBoxQP, raw) -> Optional[tuple]:
    """Active-set refinement of the interior-point solution; None if unverified."""
    d, zl, zu = raw["z"], raw["zl"], raw["zu"]
    lb, ub = qp.box.lower, qp.box.upper
    low = (d - lb) < zl
    upp = (ub - d) < zu
    low &= ~upp
    free = ~(low | upp)
    nf = int(np.count_nonzero(free))
    d_p = np.where(low, lb, np.where(upp, ub, d))
    m = qp.m
    K = np.zeros((nf + m, nf + m))
    K[:nf, :nf] = np.diag(qp.alpha[free])
    rhs = np.concatenate([-qp.g[free], qp.b - (qp.A[:, ~free] @ d_p[~free] if np.any(~free) else 0.0)])
    if m:
        K[:nf, nf:] = -qp.A[:, free].T
        K[nf:, :nf] = qp.A[:, free]
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    d_p[free] = sol[:nf]
    lam = sol[nf:]
    resid = qp.g + qp.alpha * d_p - (qp.A.T @ lam if m else 0.0)
    zl_p = np.where(low, np.maximum(resid, 0.0), 0.0)
    zu_p = np.where(upp, np.maximum(-resid, 0.0), 0.0)
    tiny = 1e-9 * (1.0 + linf(qp.g) + linf(qp.alpha))
    ok = (np.all(d_p >= lb - tiny) and np.all(d_p <= ub + tiny)
          and np.all(resid[low] >= -tiny) and np.all(resid[upp] <= tiny)
          and (not np.any(free) or linf(resid[free]) <= tiny)
          and (not m or linf(qp.A @ d_p - qp.b) <= tiny * (1.0 + linf(qp.b))))
    if not ok:
        return None
    return np.clip(d_p, lb, ub), lam, zl_p, zu_p


def solve_eq_box(qp: EqBoxQP, tol: float = 1e-9) -> QPSolution:
    """Solve the equality/box subproblem, or certify inconsistency.

    A phase-1 l1 feasibility solve runs first; the problem is declared
    inconsistent when its optimum exceeds ``1e-8 * (1 + ||b||_1)``.
    """
    n, m = qp.n, qp.m
    diagnostics = {}
    if m:
        d_f, _, feas_min = _feasibility_solve(qp.A, qp.b, qp.box, tol)
        tol_feas = 1e-8 * (1.0 + l1(qp.b))
        diagnostics["phase1_violation"] = feas_min
        if feas_min > tol_feas:
            return QPSolution(d=d_f, lam=np.zeros(m), zeta_l=np.zeros(n),
                              zeta_u=np.zeros(n), status="inconsistent",
                              diagnostics=diagnostics)
        diagnostics["jacobian_rank_deficient"] = bool(np.linalg.matrix_rank(qp.A) < m)
    raw = _ip_solve(qp.alpha, qp.g, qp.A, qp.b, qp.box.lower, qp.box.upper, tol)
    d, lam, zl, zu = raw["z"], raw["y"], raw["zl"], raw["zu"]
    res = _eqbox_kkt_residual(qp, d, lam, zl, zu)
    polished = _polish_eqbox(qp, raw)
    if polished is not None:
        res_p = _eqbox_kkt_residual(qp, *polished)
        if res_p <= res:
            d, lam, zl, zu = polished
            res = res_p
    if not raw["converged"] and res > tol * 100 * (1.0 + linf(qp.g)):
        raise SolverBreakdown(f"interior-point stalled at residual {res:.3e}")
    return QPSolution(d=d, lam=lam, zeta_l=zl, zeta_u=zu, status="optimal",
                      kkt_residual=res, iterations=raw["iterations"],
                      diagnostics=diagnostics)


def _slack_form(A, b, box, pi_alpha, pi_g, d_reg):
    """Assemble the (d, v, w) slack-variable problem data."""
    m, n = A.shape
    q_diag = np.concatenate([pi_alpha + d_reg, np.zeros(2 * m)])
    q_lin = np.concatenate([pi_g, np.ones(2 * m)])
    G = np.hstack([A, -np.eye(m), np.eye(m)])
    lb = np.concatenate([box.lower, np.zeros(2 * m)])
    ub = np.concatenate([box.upper, np.full(2 * m, np.inf)])
    return q_diag, q_lin, G, b, lb, ub


def _penalty_kkt_residual(qp: PenaltyQP, d, lam, zl, zu) -> float:
    base = qp.base
    stat = qp.pi * (base.g + base.alpha * d) + base.A.T @ lam - zl + zu
    box = base.box
    comp = max(linf(zl * (d - box.lower)), linf(zu * (box.upper - d)))
    viol = max(linf(np.minimum(d - box.lower, 0.0)), linf(np.minimum(box.upper - d, 0.0)),
               linf(np.minimum(zl, 0.0)), linf(np.minimum(zu, 0.0)),
               linf(np.maximum(np.abs(lam) - 1.0, 0.0)))
    # dual feasibility of the slack block: lam in [-1, 1] with lam_j = sigma_j off
    # the active rows, checked through the sign consistency below
    resid = base.A @ d - base.b  # equals c + A d with b = -c
    sign_err = 0.0
    for j in range(base.m):
        if abs(resid[j]) > 1e-7 * (1.0 + abs(base.b[j])):
            sign_err = max(sign_err, abs(lam[j] - np.sign(resid[j])))
    return max(linf(stat), comp, viol, sign_err)


def _polish_penalty(qp: PenaltyQP, raw, tol) -> Optional[tuple]:
    base = qp.base
    n, m = base.n, base.m
    d = raw["z"][:n]
    zl = raw["zl"][:n]
    zu = raw["zu"][:n]
    lb, ub = base.box.lower, base.box.upper
    low = (d - lb) < zl
    upp = (ub - d) < zu
    low &= ~upp
    free = ~(low | upp)
    resid = base.A @ d - base.b
    act_rows = np.abs(resid) <= np.sqrt(tol) * (1.0 + np.abs(base.b))
    sigma = np.where(act_rows, 0.0, np.sign(resid))
    nf = int(np.count_nonzero(free))
    na = int(np.count_nonzero(act_rows))
    d_p = np.where(low, lb, np.where(upp, ub, d))
    K = np.zeros((nf + na, nf + na))
    K[:nf, :nf] = qp.pi * np.diag(base.alpha[free])
    A_act = base.A[act_rows]
    A_in = base.A[~act_rows]
    rhs_stat = -qp.pi * base.g[free] - (A_in[:, free].T @ sigma[~act_rows] if m - na else 0.0)
    rhs_prim = base.b[act_rows] - (A_act[:, ~free] @ d_p[~free] if np.any(~free) else 0.0)
    if na:
        K[:nf, nf:] = A_act[:, free].T
        K[nf:, :nf] = A_act[:, free]
    sol, *_ = np.linalg.lstsq(K, np.concatenate([rhs_stat, rhs_prim]), rcond=None)
    d_p[free] = sol[:nf]
    lam = np.empty(m)
    lam[~act_rows] = sigma[~act_rows]
    lam[act_rows] = sol[nf:]
    stat = qp.pi * (base.g + base.alpha * d_p) + base.A.T @ lam
    zl_p = np.where(low, np.maximum(stat, 0.0), 0.0)
    zu_p = np.where(upp, np.maximum(-stat, 0.0), 0.0)
    tiny = 1e-9 * (1.0 + qp.pi * (linf(base.g) + linf(base.alpha)))
    resid_p = base.A @ d_p - base.b
    sign_ok = np.all(sigma[~act_rows] * resid_p[~act_rows] > -tiny) if m - na else True
    ok = (np.all(d_p >= lb - tiny) and np.all(d_p <= ub + tiny)
          and np.all(np.abs(lam) <= 1.0 + 1e-9)
          and np.all(stat[low] >= -tiny) and np.all(stat[upp] <= tiny)
          and (not np.any(free) or linf(stat[free]) <= tiny)
          and (linf(resid_p[act_rows]) <= tiny if na else True)
          and sign_ok)
    if not ok:
        return None
    return np.clip(d_p, lb, ub), lam, zl_p, zu_p


def solve_penalty(qp: PenaltyQP, tol: float = 1e-9) -> QPSolution:
    """Solve the l1-penalty subproblem (always feasible over a nonempty box)."""
    base = qp.base
    n, m = base.n, base.m
    data = _slack_form(base.A, base.b, base.box, qp.pi * base.alpha, qp.pi * base.g,
                       np.zeros(n))
    raw = _ip_solve(*data, tol)
    d = raw["z"][:n]
    lam = -raw["y"]  # kernel convention G z = b gives the opposite multiplier sign
    zl, zu = raw["zl"][:n], raw["zu"][:n]
    res = _penalty_kkt_residual(qp, d, lam, zl, zu)
    polished = _polish_penalty(qp, raw, tol)
    if polished is not None:
        res_p = _penalty_kkt_residual(qp, *polished)
        if res_p <= res:
            d, lam, zl, zu = polished
            res = res_p
    if not raw["converged"] and res > tol * 100 * (1.0 + qp.pi * linf(base.g)):
        raise SolverBreakdown(f"penalty interior-point stalled at residual {res:.3e}")
    resid = base.A @ d - base.b  # = c + A d
    v = np.maximum(resid, 0.0)
    w = np.maximum(-resid, 0.0)
    return QPSolution(d=d, lam=lam, zeta_l=zl, zeta_u=zu, status="optimal",
                      v=v, w=w, kkt_residual=res, iterations=raw["iterations"])


def _feasibility_solve(A, b, box, tol):
    n = box.n
    data = _slack_form(A, b, box, np.zeros(n), np.zeros(n), np.full(n, 2.0 * _FEAS_REG))
    raw = _ip_solve(*data, tol)
    d = np.clip(raw["z"][:n], box.lower, box.upper)
    violation = l1(A @ d - b)
    # snap near-active coordinates onto their bounds when that does not hurt;
    # interior-point vertices otherwise carry an O(tol) interior slack
    snap_tol = np.sqrt(tol) * (1.0 + box.width)
    d_snap = np.where(d - box.lower < snap_tol, box.lower,
                      np.where(box.upper - d < snap_tol, box.upper, d))
    v_snap = l1(A @ d_snap - b)
    if v_snap <= violation:
        d, violation = d_snap, v_snap
    return d, raw, violation


def solve_feasibility_l1(A, b, box: BoxBounds, tol: float = 1e-9):
    """Minimize ``||c + A d||_1`` over the box (with c = -b).

    Returns ``(d_f, delta_f)`` where ``delta_f = ||c||_1 - ||c + A d_f||_1 >= 0``
    is the attainable decrease of the linearized constraint violation.
    """
    A = np.asarray(A, dtype=float).reshape(-1, box.n)
    b = np.asarray(b, dtype=float).reshape(A.shape[0])
    d, _, violation = _feasibility_solve(A, b, box, tol)
    delta_f = max(l1(b) - violation, 0.0)
    return d, delta_f
