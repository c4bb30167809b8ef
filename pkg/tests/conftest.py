import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy import ndimage

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def smooth_texture(shape, sigma=2.0, seed=123, lo=0.1, hi=0.7):
    """Band-limited random texture scaled into [lo, hi]."""
    g = np.random.default_rng(seed)
    tex = ndimage.gaussian_filter(g.standard_normal(shape), sigma, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return lo + (hi - lo) * tex


@pytest.fixture(scope="session")
def texture_png(tmp_path_factory):
    """16-bit grey PNG of a smooth 64x64 texture, usable as a natural-image background."""
    from videoderain import io

    d = tmp_path_factory.mktemp("texture")
    io.write_frames(smooth_texture((64, 64))[:, :, None], str(d), bitdepth=16, names=["texture.png"])
    return str(d / "texture.png")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[n])
