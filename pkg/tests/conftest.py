import numpy as np
import pytest
from scipy.signal import lfilter


def simulate_ar1(phi, n, rng):
    """Stationary AR(1) with unit innovations, started from its stationary law."""
    e = rng.standard_normal(n)
    x0 = rng.standard_normal() / np.sqrt(1.0 - phi * phi)
    x, _ = lfilter([1.0], [1.0, -phi], e, zi=[phi * x0])
    return x


@pytest.fixture
def ar1():
    return simulate_ar1


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Print and keep one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_VERDICTS]

    def record(label, passed, detail):
        line = f"{label} {'PASS' if passed else 'FAIL'}: {detail}"
        print(line)
        lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
