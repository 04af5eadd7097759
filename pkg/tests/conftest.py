import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uavfml.scenario import default_scenario

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def small_config():
    """Four UAVs, two targets, two rounds: fast enough for unit tests."""
    return default_scenario(3, num_uavs=4, num_targets=2, num_rounds=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture(scope="session")
def acceptance(request):
    """Record ``(criterion, passed, detail)``; the summary prints one line each."""
    log = request.config.stash[_ACCEPTANCE]

    def record(n, passed, detail):
        log[n] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        passed, detail = log[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
