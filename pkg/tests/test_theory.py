import math

import numpy as np
import pytest

from snrlab.core.theory import (
    biased_step_law,
    compound_curves,
    eta,
    gamma_hat_step,
    psi,
    snr_theorem,
    theory_curves,
)
from snrlab.models.mixture import BiasProfile

from .conftest import make_schedule


def test_identity_profile_matches_forward_snr(sched):
    curves = theory_curves(BiasProfile.identity(sched.T), sched)
    assert curves.t[0] == 1 and curves.t[-1] == sched.T - 1
    np.testing.assert_allclose(curves.snr_reverse, curves.snr_forward, rtol=1e-12)
    np.testing.assert_allclose(curves.gamma_hat, 1.0)
    np.testing.assert_allclose(curves.psi, 0.0, atol=1e-15)
    np.testing.assert_allclose(curves.eta, 0.0, atol=1e-15)


def test_gamma_hat_between_gamma_and_one(sched):
    for t in (2, 10, 40, sched.T):
        g = gamma_hat_step(0.9, t, sched)
        assert 0.9 <= g <= 1.0
    assert gamma_hat_step(1.0, 7, sched) == 1.0
    with pytest.raises(ValueError):
        gamma_hat_step(1.2, 7, sched)


def test_bias_lowers_reverse_snr(sched):
    curves = theory_curves(BiasProfile.build(sched.T, 0.98, 0.1), sched)
    assert np.all(curves.snr_reverse < curves.snr_forward)
    assert np.all(curves.eta >= 0.1)


def test_step_law_consistent_with_psi(sched):
    t = 20
    coef, noise_std = biased_step_law(0.95, 0.2, t, sched)
    g = gamma_hat_step(0.95, t, sched)
    assert coef == pytest.approx(g * math.sqrt(sched.alpha_bar[t - 1]))
    # ψ 把 γ̂ 的信号损失也计入噪声
    assert psi(g, 0.2, t, sched) ** 2 == pytest.approx(
        noise_std**2 - (1 - sched.alpha_bar[t - 1]) + (1 - g**2) * (1 - sched.alpha_bar[t - 1])
    )


def test_snr_theorem_range(sched):
    with pytest.raises(ValueError):
        snr_theorem(1.0, 0.0, sched.T, sched)
    assert snr_theorem(1.0, 0.0, 5, sched) == pytest.approx(sched.snr(5))


def test_eta():
    assert eta(0.3, 0.4) == pytest.approx(0.5)
    assert eta(0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        eta(-0.1, 0.0)


def test_compound_identity(sched):
    curves = compound_curves(BiasProfile.identity(sched.T), sched)
    assert list(curves.t) == list(range(1, sched.T))
    np.testing.assert_allclose(curves.gamma_hat, 1.0, rtol=1e-10)
    np.testing.assert_allclose(curves.snr_reverse, [sched.snr(t) for t in curves.t], rtol=1e-9)


def test_profile_length_mismatch(sched):
    with pytest.raises(ValueError):
        theory_curves(BiasProfile.identity(sched.T - 1), sched)


def test_snr_theorem_degenerates_to_forward_snr():
    sched = make_schedule(100)
    for t in range(1, sched.T):
        assert abs(snr_theorem(1.0, 0.0, t, sched) - sched.snr(t)) <= 1e-12 * sched.snr(t)


def test_any_bias_lowers_snr(rng):
    sched = make_schedule(100)
    ts = rng.integers(1, sched.T, size=100)
    gammas = rng.uniform(0.5, 1.0, size=100)
    phis = rng.uniform(0.01, 0.5, size=100)
    # 前三分之一只收缩、中间三分之一只加噪、其余两者兼有
    gammas[33:66] = 1.0
    phis[:33] = 0.0
    for t, g, p in zip(ts, gammas, phis):
        assert snr_theorem(float(g), float(p), int(t), sched) < sched.snr(int(t))
