import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def direct_w(coeffs, R, r):
    """O(M * len(r)) evaluation of w(r) = sum a_k sin(k pi r / R)."""
    k = np.arange(1, len(coeffs) + 1)
    return np.sin(np.outer(r, k * np.pi / R)) @ coeffs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict: criterion(number, name, passed, detail)."""
    def record(num, name, passed, detail=""):
        _CRITERIA[num] = (name, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        name, ok, detail = _CRITERIA[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d} {name}: {detail}")
