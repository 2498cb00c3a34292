import numpy as np
import pytest

from bsdelab import FiltrationModel, build_uniform_grid, simulate_ensemble


@pytest.fixture(scope="session")
def grid16():
    return build_uniform_grid(1.0, 16)


@pytest.fixture(scope="session")
def nat_small(grid16):
    return simulate_ensemble(grid16, FiltrationModel.natural(), 4000, 11)


@pytest.fixture(scope="session")
def enl_small(grid16):
    return simulate_ensemble(grid16, FiltrationModel.enlarged(), 4000, 11)


@pytest.fixture(scope="session")
def nat_mid():
    return simulate_ensemble(build_uniform_grid(1.0, 32), FiltrationModel.natural(), 20000, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# acceptance verdicts, printed as one line per criterion at the end of the run
_VERDICTS = {}


@pytest.fixture
def verdict():
    def record(k, ok, detail):
        _VERDICTS[k] = (bool(ok), detail)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        ok, detail = _VERDICTS[k]
        terminalreporter.write_line(f"[criterion {k:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
