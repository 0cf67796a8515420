import numpy as np
import pytest

from levytime.simulate import SimConfig, simulate_ensemble
from levytime.symbol import triplet_preset


@pytest.fixture(scope="session")
def brownian_1e4():
    """10^4 Brownian paths on [0, 1] at dt = 1e-3, shared by the Monte Carlo tests."""
    return simulate_ensemble(triplet_preset("brownian"), 0.0, SimConfig(1e-3, 1.0, 10_000), master_seed=20240601)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture
def criterion(request):
    """``criterion(k, ok, detail)`` records one acceptance line and returns ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(k, ok, detail):
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
