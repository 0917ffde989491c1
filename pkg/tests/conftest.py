import numpy as np
import pytest

from cta_lab.geometry import build_transversal


@pytest.fixture(scope="session")
def flat():
    return build_transversal("flat-square")


@pytest.fixture(scope="session")
def curved():
    return build_transversal("perturbed-square", 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
