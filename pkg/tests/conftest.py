import numpy as np
import pytest

from mginf.laws import Exponential

# fixed once for every statistical test; never tuned
SEED = 20081218


@pytest.fixture
def exp1():
    return Exponential(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict; all lines are echoed in the terminal summary."""
    def report(k, ok: bool, detail: str) -> bool:
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
