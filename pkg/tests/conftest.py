"""共享测试夹具"""

from pathlib import Path

import numpy as np
import pytest

from snrlab.models.grid import Grid
from snrlab.models.mixture import GaussianMixture
from snrlab.models.schedule import SigmaMode, build_linear, scaled_linear_bounds

SMALL_CONFIG = """
[schedule]
T = 10
sigma_mode = "posterior"

[data]
channels = 1
height = 4
width = 4

[[data.modes]]
weight = 1.0
var = 0.25
mean = { kind = "checker", amplitude = 0.5 }

[denoiser]
kind = "biased"
gamma = 0.98
phi = 0.1

[run]
n_chains = 20
seed = 3

[diagnostics]
n = 40

[metrics]
n_proj = 8
"""


def make_schedule(T: int = 50, sigma_mode: SigmaMode | str = SigmaMode.SMALL):
    return build_linear(T, *scaled_linear_bounds(T), sigma_mode=sigma_mode)


@pytest.fixture
def sched():
    return make_schedule()


@pytest.fixture
def gaussian():
    """单高斯：棋盘格均值，方差 0.25"""
    return GaussianMixture.single(Grid.checker(0.5, 1, 4, 4), 0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_config(tmp_path):
    """把 SMALL_CONFIG 加上额外的 TOML 片段写入 tmp_path/<name>.toml"""

    def write(name: str = "small", extra: str = "", base: str = SMALL_CONFIG) -> Path:
        path = tmp_path / f"{name}.toml"
        path.write_text(base + "\n" + extra)
        return path

    return write
