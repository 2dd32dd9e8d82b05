import numpy as np
import pytest

from cmrp import dist
from cmrp.model import ExponentialKernel, GammaKernel, RiskModel


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


@pytest.fixture
def mixed_poisson():
    """Exp(theta) kernel, Theta ~ Ga(3, 2), Exp(1) claims."""
    return RiskModel(dist.Gamma(3.0, 2.0), ExponentialKernel(1.0), dist.Exponential(1.0))


@pytest.fixture
def gamma_renewal():
    return RiskModel(dist.Gamma(4.0, 4.0), GammaKernel(1.3), dist.Exponential(1.0))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
