import numpy as np
import pytest

from acdisc.acs_core import DomainSpec, standard_structure
from acdisc.fields import norm_sq


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def unit_disc():
    return DomainSpec.ball(2)


@pytest.fixture
def jst1():
    return standard_structure(1)


@pytest.fixture
def disc_exhaustion():
    """``|z|^2 - 1`` on the unit disc of C."""
    return norm_sq(2, None, 1.0, -1.0)


# --- acceptance bookkeeping: one PASS/FAIL line per criterion ------------------------

_CRITERIA = {}


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.details = number, title, []

    def note(self, text):
        self.details.append(str(text))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        if exc is not None:
            self.note(f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        line = f"CRITERION {self.number:2d} {status}: {self.title}"
        if self.details:
            line += " | " + "; ".join(self.details)
        _CRITERIA[self.number] = line
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[key])
