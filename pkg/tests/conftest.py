import time

import pytest

from bundlesqp.bundle import solve
from bundlesqp.model import SolverConfig
from bundlesqp.problems import make_problem
from bundlesqp.reference import solve_extensive


def _timed_run(name, **kwargs):
    bench = make_problem(name, **kwargs)
    cfg = SolverConfig(**bench.config_overrides)
    t0 = time.perf_counter()
    report = solve(bench.problem, bench.x0, cfg)
    elapsed = time.perf_counter() - t0
    return bench, cfg, report, elapsed


@pytest.fixture(scope="session")
def example1_run():
    return _timed_run("example1")


@pytest.fixture(scope="session")
def example2_run():
    return _timed_run("example2")


@pytest.fixture(scope="session")
def example2_mirror_run():
    return _timed_run("example2", tie_break="-")


@pytest.fixture(scope="session")
def circle_run():
    return _timed_run("circle-restoration")


@pytest.fixture(scope="session")
def toy_run():
    return _timed_run("toy-linear-coupled")


@pytest.fixture(scope="session")
def qp_sanity_run():
    return _timed_run("qp-sanity")


@pytest.fixture(scope="session")
def ref_example1():
    return solve_extensive("example1", n_starts=256, seed=0)


@pytest.fixture(scope="session")
def ref_example2():
    return solve_extensive("example2", n_starts=256, seed=0)
