import math

import numpy as np
import pytest

from snrlab.models.schedule import (
    NoiseSchedule,
    ScheduleError,
    SigmaMode,
    build_cosine,
    build_linear,
    scaled_linear_bounds,
)

from .conftest import make_schedule


def test_linear_endpoints_and_cumprod():
    sched = build_linear(100, 1e-3, 0.2)
    assert sched.T == 100
    assert sched.alpha_bar[0] == 1.0
    assert sched.beta[1] == pytest.approx(1e-3)
    assert sched.beta[100] == pytest.approx(0.2)
    np.testing.assert_allclose(sched.alpha_bar[1:], sched.alpha_bar[:-1] * sched.alpha[1:], rtol=1e-15)


def test_scaled_bounds_keep_terminal_near_noise():
    for T in (10, 50, 1000):
        sched = build_linear(T, *scaled_linear_bounds(T))
        assert sched.alpha_bar[T] < 1e-3


def test_snr_strictly_decreasing(sched):
    snr = sched.snr_curve()
    assert np.all(np.diff(snr) < 0)
    assert sched.snr(1) == pytest.approx(snr[0])


def test_beta_tilde_and_sigma_modes():
    small = make_schedule(20, SigmaMode.SMALL)
    large = make_schedule(20, SigmaMode.LARGE)
    assert small.beta_tilde[1] == 0.0
    assert small.sigma(1) == 0.0
    assert large.sigma(1) == pytest.approx(math.sqrt(large.beta[1]))
    assert np.all(small.beta_tilde[1:] <= small.beta[1:])


def test_posterior_coefs_preserve_marginal_variance(sched):
    for t in range(2, sched.T + 1):
        c_x0, c_xt = sched.posterior_coefs(t)
        ab, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
        # 给定 x₀ 时 x_{t-1} 的均值系数与方差
        assert c_x0 + c_xt * math.sqrt(ab) == pytest.approx(math.sqrt(ab_prev))
        assert c_xt**2 * (1 - ab) + sched.beta_tilde[t] == pytest.approx(1 - ab_prev)


def test_cosine_clip():
    sched = build_cosine(50, s=0.008, max_beta=0.999)
    assert np.all(sched.beta[1:] <= 0.999)
    assert sched.beta[50] == pytest.approx(0.999)
    assert sched.alpha_bar[50] == pytest.approx(sched.alpha_bar[49] * 0.001)


@pytest.mark.parametrize("t", [0, 51, -1])
def test_check_t_bounds(sched, t):
    with pytest.raises(ScheduleError):
        sched.check_t(t)


def test_invalid_schedules():
    with pytest.raises(ScheduleError):
        build_linear(0, 1e-4, 0.02)
    with pytest.raises(ScheduleError):
        build_linear(10, 0.02, 1e-4)
    with pytest.raises(ScheduleError):
        build_cosine(10, s=0.0)
    with pytest.raises(ScheduleError):
        NoiseSchedule.from_betas(np.array([0.1, 1.0]))


def test_to_rows(sched):
    rows = sched.to_rows()
    assert len(rows) == sched.T
    t, beta, ab, bt, sigma, snr = rows[9]
    assert t == 10
    assert beta == sched.beta[10]
    assert snr == pytest.approx(ab / (1 - ab))
    assert sigma == pytest.approx(math.sqrt(bt))
