import sys

import numpy as np
import pytest

from modelrisk.criteria import american_put, forward_start
from modelrisk.models import Bachelier, BlackScholes
from modelrisk.problem import Problem


@pytest.fixture(scope="session")
def bach():
    m = Bachelier(sigma=1.0)
    c = forward_start()
    return c, m, Problem(c, m)


@pytest.fixture(scope="session")
def bs04():
    m = BlackScholes(sigma=0.4)
    c = forward_start()
    return c, m, Problem(c, m)


@pytest.fixture(scope="session")
def put05():
    m = BlackScholes(sigma=0.5)
    c = american_put()
    return c, m, Problem(c, m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):


    mod = next((m for n, m in list(sys.modules.items()) if n.endswith("test_acceptance")), None)
    lines = mod.summary_lines() if mod is not None and hasattr(mod, "summary_lines") else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
