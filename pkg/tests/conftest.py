import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from swemed.model import conservative
from swemed.params import Parameters

# compiled kernels make the first call slow, so no per-example deadline
settings.register_profile("swemed", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("swemed")


@pytest.fixture
def p():
    return Parameters()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def rest_state(h, h_b=0.0):
    return conservative(h, 0.0, 0.0, 0.0, h_b)


def suspended_state(h, c_m, h_b=0.0):
    return conservative(h, 0.0, 0.0, c_m, h_b)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def emit(number, title, passed, detail):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print(line)
        assert passed, line

    return emit


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
