import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kcbsrng import bounds, device
from kcbsrng.cli import DEFAULT_SEED

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def quantum_ref():
    """Full-size quantum reference curve (20 nodes x 100 restarts), timed."""
    t0 = time.perf_counter()
    curve = bounds.quantum_curve(20, restarts=100, seed=DEFAULT_SEED)
    curve.metadata["elapsed_s"] = time.perf_counter() - t0
    return curve


@pytest.fixture(scope="session")
def ideal_log():
    return device.run_experiment(device.IdealQuantum(), device.uniform_distribution(), 100_000, DEFAULT_SEED)


@pytest.fixture(scope="session")
def nchv_log():
    return device.run_experiment(device.DeterministicNCHV(), device.uniform_distribution(), 100_000, DEFAULT_SEED)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# -- acceptance summary: one line per criterion at the end of the run -------

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)``; printed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
