import numpy as np
import pytest

from offmoo.benchmarks import make_problem
from offmoo.estimators import OfflineData
from offmoo.logged_data import generate
from offmoo.policy import LoggingPolicy


@pytest.fixture(scope="session")
def zdt1():
    return make_problem("ZDT1")


@pytest.fixture(scope="session")
def dtlz2():
    return make_problem("DTLZ2")


@pytest.fixture(scope="session")
def small_data(zdt1):
    """200 noisy records logged on ZDT1 with ε = 0.1."""
    logging = LoggingPolicy(zdt1, 0.1)
    return OfflineData.build(generate(zdt1, logging, 200, 1.0, 5), zdt1, logging)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Print and remember one PASS/FAIL line per acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def _report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert passed, line

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
