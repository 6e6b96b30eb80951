"""Quadratic-penalty smoothing of second-stage problems.

A scenario couples the first-stage point ``x`` to an inner problem through a
linear map ``W``; the smoothed recourse value is

    r_mu(x) = min_y  mu ||W x - h(y)||^2 + p(y)      over a fixed inner set,

and ``g = 2 mu W^T (W x - h(y*))`` is an upper subgradient (a Clarke
subgradient, since the smoothed value function is upper-C2 with constant
``mu ||W||^2``).  Inner solvers are exact for the built-in problem families:
closed-form separable box QPs, the parabola-bounded example set via candidate
enumeration, and a seeded multistart projected-gradient fallback for anything
user supplied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import BoxBounds, InnerSolveFailure, as_vector

EXAMPLE1_Y_BOUNDS = BoxBounds([-5.0, -5.0, 0.0], [5.0, 5.0, 10.0])
EXAMPLE2_Y_BOUNDS = BoxBounds([-5.0, -5.0, -5.0], [5.0, 5.0, 5.0])

# two candidate minimizers closer than this (inner objective gap) count as a tie
AMBIGUITY_TOL = 1e-4


@dataclass
class InnerResult:
    y: np.ndarray
    h_y: np.ndarray
    p_y: float
    unique: bool = True
    value_gap: float = np.inf
    n_candidates: int = 1


@dataclass
class RecourseSample:
    value: float
    y_star: np.ndarray
    subgradient: np.ndarray
    inner_status: dict = field(default_factory=dict)


def _depressed_cubic_roots(p: float, q: float):
    """Real roots of ``t^3 + p t + q = 0`` in closed form (Cardano/trigonometric)."""
    if p == 0.0 and q == 0.0:
        return [0.0]
    disc = 0.25 * q * q + p ** 3 / 27.0
    if disc > 0.0:
        s = math.sqrt(disc)
        return [math.copysign(abs(-0.5 * q + s) ** (1 / 3), -0.5 * q + s)
                + math.copysign(abs(-0.5 * q - s) ** (1 / 3), -0.5 * q - s)]
    if disc == 0.0:
        u = math.copysign(abs(0.5 * q) ** (1 / 3), -0.5 * q)
        return [2.0 * u, -u]
    r = math.sqrt(-(p ** 3) / 27.0)
    phi = math.acos(min(1.0, max(-1.0, -0.5 * q / r)))
    m = 2.0 * math.sqrt(-p / 3.0)
    return [m * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]


def _projection_candidates(q, bounds: BoxBounds):
    """Candidate nearest points of ``q`` in {y : y2 <= y3^2} intersected with the box.

    The feasible region in the (y2, y3) plane is bounded by the parabola, the
    box faces, and the face y2 = u2 where y3^2 >= u2.  The global projection is
    among: the box-clamped point (when it satisfies the parabola), stationary
    points of the squared distance along the parabola arc plus arc endpoints,
    and the clamped points of the admissible parts of the y2 = u2 face.
    """
    q1, q2, q3 = float(q[0]), float(q[1]), float(q[2])
    l2, u2 = float(bounds.lower[1]), float(bounds.upper[1])
    l3, u3 = float(bounds.lower[2]), float(bounds.upper[2])
    y1 = min(max(q1, float(bounds.lower[0])), float(bounds.upper[0]))
    cands = []

    y2c = min(max(q2, l2), u2)
    y3c = min(max(q3, l3), u3)
    if y2c <= y3c * y3c:
        cands.append((y2c, y3c))

    # parabola arc y2 = t^2 with t in the admissible range
    root_u2 = math.sqrt(max(u2, 0.0))
    t_hi = min(u3, root_u2)
    t_lo = max(l3, -root_u2)
    if t_lo <= t_hi:
        ts = [t_lo, t_hi]
        # stationarity of (t^2 - q2)^2 + (t - q3)^2: 4t^3 + (2 - 4 q2) t - 2 q3 = 0
        ts += [t for t in _depressed_cubic_roots(0.5 - q2, -0.5 * q3)
               if t_lo <= t <= t_hi]
        for t in ts:
            cands.append((t * t, t))

    # admissible parts of the y2 = u2 face (y3^2 >= u2)
    if u2 >= 0.0:
        if root_u2 <= u3:
            cands.append((u2, min(max(q3, root_u2), u3)))
        if l3 <= -root_u2:
            cands.append((u2, min(max(q3, l3), -root_u2)))

    return [((y2 - q2) ** 2 + (y3 - q3) ** 2, np.array([y1, y2, y3]))
            for y2, y3 in cands]


def project_onto_example_set(q, bounds: BoxBounds = EXAMPLE2_Y_BOUNDS,
                             prefer_positive_y3: bool = True) -> np.ndarray:
    """Nearest point of ``q`` in the parabola-bounded example set.

    Ties (mirrored minimizers) break deterministically: the branch with the
    larger y3 wins under the default rule, the smaller one when
    ``prefer_positive_y3`` is False; remaining ties go to the lexicographically
    smallest point.
    """
    cands = _projection_candidates(q, bounds)
    best = min(c[0] for c in cands)
    tied = [y for val, y in cands if val <= best + 1e-12 * (1.0 + best)]
    sign = -1.0 if prefer_positive_y3 else 1.0
    tied.sort(key=lambda y: (sign * y[2], tuple(y)))
    return tied[0]


class ParabolaSetInner:
    """Inner solver for the example set with h(y) = y and p = 0 (a projection)."""

    def __init__(self, bounds: BoxBounds = EXAMPLE2_Y_BOUNDS,
                 prefer_positive_y3: bool = True):
        self.bounds = bounds
        self.prefer_positive_y3 = prefer_positive_y3
        self.y_box = bounds

    def solve(self, target, mu: float) -> InnerResult:
        cands = _projection_candidates(target, self.bounds)
        y = project_onto_example_set(target, self.bounds, self.prefer_positive_y3)
        best = float((y[1] - target[1]) ** 2 + (y[2] - target[2]) ** 2)
        # gap to the nearest distinct candidate, in inner-objective units
        gap = np.inf
        for val, yc in cands:
            if np.linalg.norm(yc - y) > 1e-9:
                gap = min(gap, mu * (val - best))
        return InnerResult(y=y, h_y=y, p_y=0.0, unique=bool(gap > AMBIGUITY_TOL),
                           value_gap=float(gap), n_candidates=len(cands))


class SeparableBoxQPInner:
    """Inner solver for h(y) = y, p(y) = 0.5 y^T diag(Q) y + q^T y over a box."""

    def __init__(self, q_diag, q_lin, y_box: BoxBounds):
        self.q_diag = as_vector(q_diag, "q_diag")
        self.q_lin = as_vector(q_lin, "q_lin")
        self.y_box = y_box
        if np.any(self.q_diag < 0):
            raise ValueError("inner quadratic diagonal must be nonnegative")

    def solve(self, target, mu: float) -> InnerResult:
        t = np.asarray(target, dtype=float)
        y = (2.0 * mu * t - self.q_lin) / (2.0 * mu + self.q_diag)
        y = np.clip(y, self.y_box.lower, self.y_box.upper)
        p = 0.5 * float(y @ (self.q_diag * y)) + float(self.q_lin @ y)
        return InnerResult(y=y, h_y=y, p_y=p, unique=True, value_gap=np.inf)


class MultistartProjectedGradientInner:
    """Seeded multistart projected gradient for user-defined inner problems.

    ``h`` must be the identity here (the common case after slack conversion);
    ``p`` and ``p_grad`` describe the smooth inner cost and ``project`` maps
    onto the inner feasible set.
    """

    def __init__(self, p, p_grad, project, y_box: BoxBounds, n_starts: int = 32,
                 seed: int = 0, max_steps: int = 500, tol: float = 1e-12):
        self.p = p
        self.p_grad = p_grad
        self.project = project
        self.y_box = y_box
        self.n_starts = n_starts
        self.seed = seed
        self.max_steps = max_steps
        self.tol = tol

    def solve(self, target, mu: float) -> InnerResult:
        t = np.asarray(target, dtype=float)

        def obj(y):
            return mu * float(np.sum((t - y) ** 2)) + float(self.p(y))

        def grad(y):
            return -2.0 * mu * (t - y) + np.asarray(self.p_grad(y), dtype=float)

        rng = np.random.default_rng(self.seed)
        lo, hi = self.y_box.lower, self.y_box.upper
        starts = [self.project(lo + rng.random(self.y_box.n) * (hi - lo))
                  for _ in range(self.n_starts)]
        best_y, best_v = None, np.inf
        values = []
        for y in starts:
            step = 1.0
            fy = obj(y)
            for _ in range(self.max_steps):
                gy = grad(y)
                while step > 1e-18:
                    y_new = self.project(y - step * gy)
                    f_new = obj(y_new)
                    if f_new <= fy - 1e-4 * step * float(gy @ gy):
                        break
                    step *= 0.5
                if np.linalg.norm(y_new - y) <= self.tol * (1.0 + np.linalg.norm(y)):
                    y, fy = y_new, f_new
                    break
                y, fy = y_new, f_new
                step = min(step * 2.0, 1.0)
            values.append((fy, y))
            if fy < best_v:
                best_v, best_y = fy, y
        if best_y is None or not np.isfinite(best_v):
            raise InnerSolveFailure("multistart inner solve produced no finite value")
        gap = np.inf
        for fy, y in values:
            if np.linalg.norm(y - best_y) > 1e-6 * (1.0 + np.linalg.norm(best_y)):
                gap = min(gap, fy - best_v)
        return InnerResult(y=best_y, h_y=best_y, p_y=float(self.p(best_y)),
                           unique=bool(gap > AMBIGUITY_TOL), value_gap=float(gap),
                           n_candidates=len(values))


@dataclass
class Scenario:
    """One second-stage problem under quadratic penalty smoothing."""

    W: np.ndarray
    inner: object
    x_box: Optional[BoxBounds] = None
    M: Optional[float] = None

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self._w = float(np.linalg.norm(self.W, 2))

    @property
    def w(self) -> float:
        """Spectral norm of the coupling operator."""
        return self._w

    def coupling_bound(self) -> float:
        """Interval bound M on ``||W x - h(y)||`` over the boxes (h = identity)."""
        if self.M is not None:
            return self.M
        if self.x_box is None or getattr(self.inner, "y_box", None) is None:
            raise ValueError("coupling bound needs x_box and inner.y_box or explicit M")
        y_box = self.inner.y_box
        # per-output interval of (W x): center plus radius from absolute row sums
        mid = 0.5 * (self.x_box.lower + self.x_box.upper)
        rad = 0.5 * (self.x_box.upper - self.x_box.lower)
        c = self.W @ mid
        r = np.abs(self.W) @ rad
        hi = np.maximum(np.abs(c + r - y_box.lower), np.abs(c - r - y_box.upper))
        self.M = float(np.linalg.norm(hi))
        return self.M


def smooth_recourse(x, scenario: Scenario, mu: float) -> RecourseSample:
    """Evaluate the smoothed recourse value and its upper subgradient at ``x``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    x = as_vector(x, "x")
    t = scenario.W @ x
    res = scenario.inner.solve(t, mu)
    gap_vec = t - res.h_y
    value = mu * float(gap_vec @ gap_vec) + res.p_y
    g = 2.0 * mu * (scenario.W.T @ gap_vec)
    return RecourseSample(value=value, y_star=res.y, subgradient=g,
                          inner_status={"unique": res.unique,
                                        "value_gap": res.value_gap,
                                        "candidates": res.n_candidates})


def aggregate_recourse(x, scenarios, mu: float):
    """Uniform average of per-scenario values and subgradients, in index order."""
    if not scenarios:
        raise ValueError("scenario list must be nonempty")
    x = as_vector(x, "x")
    total_v = 0.0
    total_g = np.zeros_like(x)
    for s in scenarios:
        sample = smooth_recourse(x, s, mu)
        total_v += sample.value
        total_g += sample.subgradient
    k = len(scenarios)
    return total_v / k, total_g / k


def smoothing_demo(which: str, x: float, mu: float, params=(1.0, -1.0)) -> float:
    """Closed-form smoothed value functions of the two 1-D demos.

    ``eg1``: min over y >= 0 of ``y + mu (y^2 - x)^2`` (cubic stationarity plus
    the boundary).  ``eg2``: min over y, s >= 0 of ``a y^2 + b y + mu (x+s-y)^2``,
    reduced by minimizing over the slack first.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    x = float(x)
    if which == "eg1":
        # stationarity of y + mu (y^2 - x)^2: 4 mu y^3 - 4 mu x y + 1 = 0
        cands = [0.0]
        cands += [t for t in _depressed_cubic_roots(-x, 0.25 / mu) if t >= 0]
        return min(t + mu * (t * t - x) ** 2 for t in cands)
    if which == "eg2":
        a, b = params
        if not a > 0:
            raise ValueError("eg2 needs a > 0")
        best = np.inf
        # s = max(0, y - x): penalty vanishes for y >= max(0, x)
        lo = max(0.0, x)
        y = max(-b / (2.0 * a), lo)
        best = min(best, a * y * y + b * y)
        if x > 0:
            y = float(np.clip((2.0 * mu * x - b) / (2.0 * a + 2.0 * mu), 0.0, x))
            best = min(best, a * y * y + b * y + mu * (x - y) ** 2)
        return float(best)
    raise ValueError(f"unknown demo {which!r}")
