import numpy as np
import pytest

from shapeak.instances import example2_instance
from shapeak.spf import SpfSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def pair_problem():
    """Two-variable quadratic with minimizer (1, 1) and its unit-slope penalty."""
    inst = example2_instance()
    return inst, inst.oracle(), SpfSpec.g(0.5, 1, 1, 1, 1)


@pytest.fixture
def default_spec():
    return SpfSpec.g(0.5, 2.5, 2.5, 2, 2)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def record_criterion():
    """Collect one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}  {title}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
