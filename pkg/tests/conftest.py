import numpy as np
import pytest

from evdeblur.events import EventStream
from evdeblur.simulator import SimConfig, make_fixture


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bars_fixture():
    """Translating bars, 64x64, T=7, tau=0.1, 16 substeps."""
    return make_fixture("translating_bars", 64, 7, (1.0, 0.0), SimConfig(0.1, 1e-3, 16))


def random_stream(rng, n=200, width=12, height=9, t_begin=1.0, t_end=5.0):
    t = rng.uniform(t_begin, t_end, size=n)
    # exercise interval edges and ties
    t[: n // 10] = rng.integers(int(t_begin), int(t_end) + 1, size=n // 10).astype(float)
    x = rng.integers(0, width, size=n)
    y = rng.integers(0, height, size=n)
    p = rng.choice([-1, 1], size=n)
    return EventStream(t, x, y, p, width, height, t_begin, t_end)


# acceptance criteria report: one line per criterion, shown after the run
ACCEPTANCE_LINES = []


def report_criterion(name, passed, detail):
    line = f"{name} {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
