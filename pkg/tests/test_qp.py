import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bundlesqp.model import BoxBounds
from bundlesqp.qp import (
    EqBoxQP,
    PenaltyQP,
    solve_eq_box,
    solve_feasibility_l1,
    solve_penalty,
)

from oracles import eqbox_bruteforce, random_eqbox_instance


def box(lo, hi):
    return BoxBounds(lo, hi)


class TestSolveEqBox:
    def test_unconstrained_origin(self):
        s = solve_eq_box(EqBoxQP([0, 0], 1.0, np.zeros((0, 2)), [], box([-1, -1], [1, 1])))
        assert s.status == "optimal"
        assert_allclose(s.d, [0, 0], atol=1e-10)
        assert_allclose([s.lam.size, np.max(s.zeta_l), np.max(s.zeta_u)], [0, 0, 0],
                        atol=1e-10)

    def test_interior_newton_point(self):
        s = solve_eq_box(EqBoxQP([1], 2.0, np.zeros((0, 1)), [], box([-5], [5])))
        assert_allclose(s.d, [-0.5], atol=1e-10)

    def test_equality_with_hand_kkt(self):
        s = solve_eq_box(EqBoxQP([1, 1], 1.0, [[1, 1]], [1], box([-10, -10], [10, 10])))
        assert_allclose(s.d, [0.5, 0.5], atol=1e-9)
        assert_allclose(s.lam, [1.5], atol=1e-9)
        # cross-check on a dense grid along the constraint line plus polish
        ts = np.arange(-10, 10, 1e-3)
        vals = (1 - ts) + ts + 0.5 * (ts**2 + (1 - ts) ** 2)
        t = ts[np.argmin(vals)]
        assert abs(0.5 * (t**2 + (1 - t) ** 2) + 1.0 - (s.d @ s.d / 2 + s.d.sum())) < 1e-5

    def test_inconsistent_equality(self):
        s = solve_eq_box(EqBoxQP([0], 1.0, [[1]], [3], box([-1], [1])))
        assert s.status == "inconsistent"

    def test_oracle_equivalence_200_instances(self):
        rng = np.random.default_rng(42)
        t0 = time.perf_counter()
        for _ in range(200):
            g, alpha, A, b, lo, hi = random_eqbox_instance(rng)
            qp = EqBoxQP(g, alpha, A, b, box(lo, hi))
            s = solve_eq_box(qp, 1e-9)
            assert s.status == "optimal"
            assert s.kkt_residual <= 1e-8
            ref, _ = eqbox_bruteforce(g, alpha, A, b, lo, hi)
            assert abs(qp.objective(s.d) - ref) <= 1e-6
        assert time.perf_counter() - t0 < 10.0

    def test_degenerate_alpha_stays_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            g, _, A, b, lo, hi = random_eqbox_instance(rng)
            qp = EqBoxQP(g, 1e-8, A, b, box(lo, hi))
            s = solve_eq_box(qp, 1e-9)
            assert s.status == "optimal"
            assert np.all(np.isfinite(s.d))
            assert np.all(s.d >= lo - 1e-8) and np.all(s.d <= hi + 1e-8)
            assert s.kkt_residual <= 1e-8

    def test_diagonal_alpha(self):
        s = solve_eq_box(EqBoxQP([1, 1], [1.0, 4.0], np.zeros((0, 2)), [],
                                 box([-5, -5], [5, 5])))
        assert_allclose(s.d, [-1.0, -0.25], atol=1e-9)

    def test_rank_deficiency_reported(self):
        s = solve_eq_box(EqBoxQP([1, 1], 1.0, [[1, 1], [2, 2]], [1, 2],
                                 box([-10, -10], [10, 10])))
        assert s.status == "optimal"
        assert s.diagnostics["jacobian_rank_deficient"]


class TestSolvePenalty:
    def test_large_pi_matches_eq_box(self):
        base = EqBoxQP([1, 1], 1.0, [[1, 1]], [1], box([-10, -10], [10, 10]))
        s_eq = solve_eq_box(base)
        s_pen = solve_penalty(PenaltyQP(base, 1e6))
        assert np.linalg.norm(s_pen.d - s_eq.d) <= 1e-4

    def test_zero_jacobian_row(self):
        qp = PenaltyQP(EqBoxQP([0], 1.0, [[0]], [-1], box([-1], [1])), 1.0)
        s = solve_penalty(qp)
        assert_allclose(s.d, [0.0], atol=1e-9)
        # residual of 1 absorbed by one slack, multiplier pinned at the sign
        assert_allclose(s.v + s.w, [1.0], atol=1e-9)
        assert s.v[0] * s.w[0] <= 1e-9
        assert_allclose(s.lam, [1.0], atol=1e-9)

    def test_penalty_vs_l1_tradeoff(self):
        qp = PenaltyQP(EqBoxQP([10], 1.0, [[1]], [0.5], box([-1], [1])), 1.0)
        s = solve_penalty(qp)

        def obj(d):
            return 1.0 * (10 * d + 0.5 * d * d) + abs(d - 0.5)

        # 1-D grid oracle beats neither candidate nor the returned point
        grid = np.arange(-1, 1.0000001, 1e-4)
        best = min(obj(t) for t in grid)
        assert obj(float(s.d[0])) <= best + 1e-6
        assert obj(float(s.d[0])) <= obj(0.5) + 1e-9
        assert obj(float(s.d[0])) <= obj(-1.0) + 1e-9

    def test_multiplier_law_100_instances(self):
        rng = np.random.default_rng(7)
        checked_inactive = 0
        for _ in range(100):
            g, alpha, A, b, lo, hi = random_eqbox_instance(rng)
            if A.shape[0] == 0:
                A = rng.uniform(-2, 2, (1, g.size))
                b = rng.uniform(-2, 2, 1)
            pi = float(10.0 ** rng.uniform(-2, 2))
            qp = PenaltyQP(EqBoxQP(g, alpha, A, b, box(lo, hi)), pi)
            s = solve_penalty(qp, 1e-9)
            resid = A @ s.d - b  # = c + A d
            assert np.all(np.abs(s.lam) <= 1.0 + 1e-8)
            for j in range(A.shape[0]):
                if abs(resid[j]) > 1e-6:
                    assert abs(s.lam[j] - np.sign(resid[j])) <= 1e-6
                    checked_inactive += 1
        assert checked_inactive > 20  # the law must actually get exercised

    def test_optimality_against_random_feasible_points(self):
        rng = np.random.default_rng(19)
        for _ in range(25):
            g, alpha, A, b, lo, hi = random_eqbox_instance(rng)
            if A.shape[0] == 0:
                continue
            pi = 0.5
            qp = PenaltyQP(EqBoxQP(g, alpha, A, b, box(lo, hi)), pi)
            s = solve_penalty(qp, 1e-9)

            def pen_obj(d):
                return pi * (g @ d + 0.5 * d @ (np.asarray(alpha) * d)) \
                    + np.abs(A @ d - b).sum()

            base = pen_obj(s.d)
            for _ in range(50):
                d_try = lo + rng.random(g.size) * (hi - lo)
                assert base <= pen_obj(d_try) + 1e-8


class TestFeasibility:
    def test_already_feasible_min_norm(self):
        d, delta = solve_feasibility_l1([[1.0]], [0.0], box([-1], [1]))
        assert_allclose(d, [0.0], atol=1e-8)
        assert delta == 0.0

    def test_zero_row_critical(self):
        d, delta = solve_feasibility_l1([[0.0]], [1.0], box([-1], [1]))
        assert delta == 0.0

    def test_box_limited_decrease(self):
        d, delta = solve_feasibility_l1([[1.0]], [-1.0], box([-0.4], [0.4]))
        assert_allclose(d, [-0.4], atol=1e-8)
        assert_allclose(delta, 0.4, atol=1e-8)

    def test_delta_nonnegative_randomized(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 3))
            A = rng.uniform(-2, 2, (m, n))
            b = rng.uniform(-2, 2, m)
            lo = rng.uniform(-1, -0.1, n)
            hi = rng.uniform(0.1, 1, n)
            d, delta = solve_feasibility_l1(A, b, box(lo, hi))
            assert delta >= 0.0
            assert np.all(d >= lo - 1e-9) and np.all(d <= hi + 1e-9)
            # the reported decrease matches the returned step
            assert_allclose(delta, np.abs(b).sum() - np.abs(A @ d - b).sum(),
                            atol=1e-7)
