import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from lexstereo.core import MatchParams, StereoPair
from lexstereo.energy import EnergyModel


def textured_pair(height=24, width=32, shift=3, disp_max=8.0, seed=0, noise=2.0):
    rng = np.random.default_rng(seed)
    left = gaussian_filter(rng.uniform(0, 255, (height, width + shift, 3)), (1.0, 1.0, 0))
    right = left[:, shift:] + rng.normal(0, noise, (height, width, 3))
    return StereoPair(left[:, :width], np.clip(right, 0, 255), disp_max)


@pytest.fixture
def small_pair():
    return textured_pair()


@pytest.fixture
def small_model(small_pair):
    return EnergyModel(small_pair, MatchParams(window_radius=4))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
