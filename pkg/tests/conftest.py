import math

import pytest

from magnusgate.characterize import calibrate_delta
from magnusgate.ion_model import TWO_PI, PhysicalConfig, derive_params

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg():
    return PhysicalConfig(depth_override=TWO_PI * 1.6e6)


@pytest.fixture(scope="session")
def dp(cfg):
    return derive_params(cfg)


@pytest.fixture(scope="session")
def calibration(cfg, dp):
    """Full-size calibration of delta at default cutoffs (slow, shared)."""
    return calibrate_delta(cfg, dp)


@pytest.fixture(scope="session")
def dp_cal(dp, calibration):
    return dp.with_delta(calibration.delta)


@pytest.fixture(scope="session")
def small_cfg():
    return PhysicalConfig(depth_override=TWO_PI * 1.6e6)


@pytest.fixture(scope="session")
def small_dp(small_cfg):
    # near the calibrated operating point; used with reduced cutoffs for speed
    return derive_params(small_cfg).with_delta(TWO_PI * 8007.18)
