import numpy as np
import pytest
from numpy.testing import assert_allclose

from bundlesqp.model import (
    BoxBounds,
    ConfigError,
    NonsmoothOracle,
    OracleFailure,
    OracleSample,
    ShapeError,
    SmoothConstraints,
    SolverConfig,
    evaluate_objective,
    kkt_residual,
    no_constraints,
)
from bundlesqp.problems import make_problem
from bundlesqp.twostage import EXAMPLE2_Y_BOUNDS, ParabolaSetInner, Scenario, smooth_recourse

from oracles import parabola_min_1d


def l1_oracle():
    return NonsmoothOracle(lambda x: OracleSample(np.sum(np.abs(x)), np.sign(x)))


class TestEvaluateObjective:
    def test_l1_at_smooth_point(self):
        sample = evaluate_objective(l1_oracle(), [1.0, -2.0])
        assert sample.value == 3.0
        assert_allclose(sample.subgradient, [1.0, -1.0])

    def test_l1_at_kink_returns_zero_subgradient(self):
        sample = evaluate_objective(l1_oracle(), [0.0, 0.0])
        assert sample.value == 0.0
        assert_allclose(sample.subgradient, [0.0, 0.0])

    def test_example2_recourse_value(self):
        # independent oracle: refine the 1-D boundary problem (t^2-1)^2 + t^2
        expected, _ = parabola_min_1d(lambda t: (t * t - 1.0) ** 2 + t * t, -3, 3)
        scenario = Scenario(W=np.eye(3), inner=ParabolaSetInner(EXAMPLE2_Y_BOUNDS))
        oracle = NonsmoothOracle(
            lambda x: OracleSample(*(lambda s: (s.value, s.subgradient))(
                smooth_recourse(x, scenario, 1.0))))
        sample = evaluate_objective(oracle, [0.0, 1.0, 0.0])
        assert_allclose(sample.value, expected, atol=1e-10)
        assert_allclose(sample.value, 0.75, atol=1e-12)

    def test_counter_increments(self):
        oracle = l1_oracle()
        evaluate_objective(oracle, [1.0])
        evaluate_objective(oracle, [2.0])
        assert oracle.calls == 2

    def test_nonfinite_subgradient_reports_index(self):
        oracle = NonsmoothOracle(
            lambda x: OracleSample(1.0, np.array([0.0, np.nan, 0.0])))
        with pytest.raises(OracleFailure) as err:
            evaluate_objective(oracle, [0.0, 0.0, 0.0])
        assert err.value.index == 1

    def test_box_tolerance(self):
        box = BoxBounds([0.0], [1.0])
        evaluate_objective(l1_oracle(), [1.0 + 1e-13], box)
        with pytest.raises(ValueError):
            evaluate_objective(l1_oracle(), [1.1], box)


class TestKKTResidual:
    def test_unconstrained_minimum(self):
        box = BoxBounds([0.0, 0.0], [1.0, 1.0])
        res = kkt_residual([0.5, 0.5], [0.0, 0.0], [], [0, 0], [0, 0],
                           no_constraints(2), box)
        assert res == 0.0

    def test_bound_multiplier_absorbs_gradient(self):
        box = BoxBounds([0.0], [1.0])
        res = kkt_residual([0.0], [1.0], [], [1.0], [0.0], no_constraints(1), box)
        assert res == 0.0

    def test_pure_feasibility_violation(self):
        cons = SmoothConstraints(1, lambda x: (np.array([x[0] - 1.0]),
                                               np.array([[1.0]])))
        box = BoxBounds([0.0], [1.0])
        res = kkt_residual([0.5], [0.0], [0.0], [0.0], [0.0], cons, box)
        assert_allclose(res, 0.5)

    def test_shape_error(self):
        box = BoxBounds([0.0], [1.0])
        with pytest.raises(ShapeError):
            kkt_residual([0.5], [0.0, 1.0], [], [0.0], [0.0], no_constraints(1), box)

    def test_negative_multiplier_rejected(self):
        box = BoxBounds([0.0], [1.0])
        with pytest.raises(ValueError):
            kkt_residual([0.5], [0.0], [], [-1.0], [0.0], no_constraints(1), box)

    def test_zero_iff_all_conditions_hold(self):
        cons = SmoothConstraints(1, lambda x: (np.array([x[0] + x[1] - 1.0]),
                                               np.array([[1.0, 1.0]])))
        box = BoxBounds([0.0, 0.0], [2.0, 2.0])
        # stationary feasible point: g + J^T lam - zl + zu = 0 with lam = -1
        res = kkt_residual([0.5, 0.5], [1.0, 1.0], [-1.0], [0, 0], [0, 0], cons, box)
        assert res <= 1e-12
        # perturb each condition group and watch the residual move
        assert kkt_residual([0.5, 0.5], [1.0, 1.2], [-1.0], [0, 0], [0, 0], cons, box) > 1e-3
        assert kkt_residual([0.6, 0.5], [1.0, 1.0], [-1.0], [0, 0], [0, 0], cons, box) > 1e-3
        assert kkt_residual([0.5, 0.5], [1.0, 1.0], [-1.0], [0.5, 0], [0.5, 0],
                            cons, box) > 1e-3


class TestConfigValidation:
    def test_defaults_valid(self):
        SolverConfig().validate()

    @pytest.mark.parametrize("bad", [
        {"eta_l_plus": 0.0}, {"eta_l_plus": 1.5}, {"eta_l_minus": 0.9},
        {"eta_beta": 0.0}, {"eta_beta": 0.6, "eta_gamma_plus": 0.5},
        {"eta_gamma_plus": 1.2}, {"eta_gamma_minus": 0.5}, {"eta_alpha": 1.0},
        {"gamma": 0.0}, {"eta_pi": 1.0}, {"eta_f": 0.0}, {"eps_f": -1.0},
        {"alpha0": 0.0}, {"alpha_min": 0.0}, {"alpha_max": 0.5},
        {"alpha_strategy": "newton"}, {"max_iters": 0},
    ])
    def test_orderings_rejected(self, bad):
        with pytest.raises(ConfigError):
            SolverConfig(**bad).validate()


class TestBoxBounds:
    def test_strict_width_required(self):
        with pytest.raises(ValueError):
            BoxBounds([0.0, 0.0], [1.0, 0.0])

    def test_shift(self):
        box = BoxBounds([-1.0, 2.0], [1.0, 5.0])
        shifted = box.shifted()
        assert_allclose(shifted.lower, [0.0, 0.0])
        assert_allclose(shifted.upper, [2.0, 3.0])


@pytest.mark.parametrize("name", ["qp-sanity", "circle-restoration", "toy-linear-coupled"])
def test_jacobian_matches_finite_differences(name):
    bench = make_problem(name)
    cons = bench.problem.cons()
    box = bench.problem.box
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(20):
        x = box.lower + (0.1 + 0.8 * rng.random(box.n)) * box.width
        _, jac = cons.eval(x)
        for j in range(box.n):
            e = np.zeros(box.n)
            e[j] = h
            fd = (cons.eval(x + e)[0] - cons.eval(x - e)[0]) / (2 * h)
            assert np.linalg.norm(jac[:, j] - fd) <= 1e-5


def test_constraint_hessian_bound_holds_on_samples():
    bench = make_problem("circle-restoration")
    cons = bench.problem.cons()
    rng = np.random.default_rng(3)
    h = 1e-3  # constraint is quadratic: second differences are exact, so a
    # larger step just suppresses roundoff
    for _ in range(50):
        x = rng.uniform(-2, 2, 2)
        d = rng.normal(size=2)
        # quadratic constraint: exact curvature via second difference
        c0 = cons.eval(x)[0]
        cp = cons.eval(x + h * d)[0]
        cm = cons.eval(x - h * d)[0]
        curv = (cp - 2 * c0 + cm) / h**2
        assert 0.5 * curv[0] <= cons.hessian_bound * (d @ d) + 1e-6
