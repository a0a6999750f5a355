import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mechlearn import BetaSymmetric, TruncatedNormal, Uniform, efficient_envelope, objective_weights, solve_reduced
from mechlearn.mechanisms import solve_logconcave

FAMILIES = {
    "uniform": Uniform(),
    "beta2": BetaSymmetric(2.0),
    "truncnorm": TruncatedNormal(0.2),
}


@pytest.fixture(scope="session")
def uniform():
    return Uniform()


@pytest.fixture(scope="session")
def beta2():
    return BetaSymmetric(2.0)


@pytest.fixture(scope="session")
def uniform_lp(uniform):
    bounds = efficient_envelope(uniform, 2)
    weights = objective_weights(uniform)
    return bounds, weights, solve_reduced(weights, bounds)


@pytest.fixture(scope="session")
def uniform_opt(uniform):
    return solve_logconcave(uniform, 2)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
