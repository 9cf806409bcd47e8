import numpy as np
import pytest

from tensoruq.basis import Distribution, ParameterSpace, build_basis
from tensoruq.tensor import CpFactors


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cp(rng, shape, r, scale=1.0):
    return CpFactors(tuple(scale * rng.standard_normal((q, r)) for q in shape))


def small_basis(d=3, q=3, p=2, kind="gaussian"):
    dist = Distribution.gaussian() if kind == "gaussian" else Distribution.uniform()
    return build_basis(ParameterSpace.iid(d, dist, q), p)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
