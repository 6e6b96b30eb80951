"""Independent brute-force oracles used to freeze expected values.

These deliberately avoid the code paths they check: the QP oracle enumerates
bound activity patterns and solves each reduced problem with dense linear
algebra; the 1-D parabola oracle refines a grid instead of using the
closed-form candidate enumeration.
"""
import itertools

import numpy as np


def eqbox_bruteforce(g, alpha, A, b, lower, upper, feas_tol=1e-9):
    """Optimal objective of min g^T d + .5 d^T diag(alpha) d, A d = b, box.

    Enumerates every lower/upper/free activity pattern, solves the reduced
    equality-constrained problem on the free block via SVD nullspace algebra,
    and keeps the best box-feasible candidate.  Returns (objective, d).
    """
    g = np.asarray(g, float)
    alpha = np.asarray(alpha, float)
    if alpha.ndim == 0:
        alpha = np.full(g.size, float(alpha))
    A = np.asarray(A, float).reshape(-1, g.size)
    b = np.asarray(b, float).reshape(A.shape[0])
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    n = g.size
    best_val, best_d = np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        d = np.zeros(n)
        free = []
        for j, p in enumerate(pattern):
            if p == 1:
                d[j] = lower[j]
            elif p == 2:
                d[j] = upper[j]
            else:
                free.append(j)
        free = np.array(free, dtype=int)
        if free.size:
            AF = A[:, free]
            fixed_mask = np.ones(n, bool)
            fixed_mask[free] = False
            r = b - A[:, fixed_mask] @ d[fixed_mask] if fixed_mask.any() else b.copy()
            if A.shape[0]:
                p_sol, *_ = np.linalg.lstsq(AF, r, rcond=None)
                if np.linalg.norm(AF @ p_sol - r, np.inf) > feas_tol * (1 + np.linalg.norm(r)):
                    continue
                _, s, vt = np.linalg.svd(AF, full_matrices=True)
                rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 0.0)))
                N = vt[rank:].T
            else:
                p_sol = np.zeros(free.size)
                N = np.eye(free.size)
            gf = g[free] + alpha[free] * p_sol
            if N.shape[1]:
                H = N.T @ (alpha[free, None] * N)
                z = np.linalg.solve(H, -N.T @ gf)
                d[free] = p_sol + N @ z
            else:
                d[free] = p_sol
        if A.shape[0] and np.linalg.norm(A @ d - b, np.inf) > feas_tol * (1 + np.linalg.norm(b)):
            continue
        if np.any(d < lower - 1e-9) or np.any(d > upper + 1e-9):
            continue
        val = float(g @ d + 0.5 * d @ (alpha * d))
        if val < best_val:
            best_val, best_d = val, np.clip(d, lower, upper)
    return best_val, best_d


def parabola_min_1d(fn, lo, hi, rounds=40, points=201):
    """Global 1-D minimum by iterated grid refinement; independent of any
    stationarity analysis."""
    lo, hi = float(lo), float(hi)
    for _ in range(rounds):
        xs = np.linspace(lo, hi, points)
        vals = np.array([fn(x) for x in xs])
        i = int(np.argmin(vals))
        h = (hi - lo) / (points - 1)
        lo, hi = xs[i] - h, xs[i] + h
        if h < 1e-14:
            break
    xs = np.linspace(lo, hi, points)
    vals = np.array([fn(x) for x in xs])
    i = int(np.argmin(vals))
    return float(vals[i]), float(xs[i])


def random_eqbox_instance(rng, n_max=4, m_max=2):
    """A consistent random equality/box instance with entries in [-2, 2]."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, min(m_max, n) + 1))
    g = rng.uniform(-2, 2, n)
    alpha = rng.uniform(0.1, 2.0, n)
    lower = rng.uniform(-2, -0.1, n)
    upper = rng.uniform(0.1, 2, n)
    A = rng.uniform(-2, 2, (m, n))
    d0 = lower + rng.random(n) * (upper - lower)
    b = A @ d0 if m else np.zeros(0)
    return g, alpha, A, b, lower, upper
