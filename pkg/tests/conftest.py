import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rowtracker.geom import Calibration, Intrinsics, default_extrinsics

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

SUITE_BUDGET_S = 120.0

# (criterion, passed, detail) lines collected by the acceptance tests
ACCEPTANCE = []
_started = {}


def pytest_sessionstart(session):
    _started["t"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _started["t"]
    _started["elapsed"] = elapsed
    if ACCEPTANCE:
        ok = elapsed < SUITE_BUDGET_S
        ACCEPTANCE.append(("full suite wall-clock", ok, f"{elapsed:.1f} s (limit {SUITE_BUDGET_S:.0f} s)"))
        if not ok and session.exitstatus == 0:
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def criterion():
    """Record one acceptance line and assert it."""

    def record(name, ok, detail):
        ACCEPTANCE.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return record


@pytest.fixture
def K600():
    # 1280x720 image with fx = fy = 600
    return Intrinsics(600.0, 600.0, 640.0, 360.0, 1280, 720)


@pytest.fixture
def small_calib():
    return Calibration(Intrinsics.default().scaled(0.25), default_extrinsics())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
