"""
解析去噪器

- ExactDenoiser: 高斯混合数据上的精确后验均值 E[x₀|x_t]（Tweedie）
- BiasedDenoiser: 在任意内层去噪器外加 γ_t 收缩与 φ_t 噪声
"""

import logging
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from ..models.grid import check_same_shape
from ..models.mixture import BiasProfile, GaussianMixture
from ..models.schedule import NoiseSchedule

logger = logging.getLogger(__name__)


class Denoiser(Protocol):
    """x₀ 预测接口；needs_noise 为真时调用方必须传入 bias_noise 流的噪声"""

    sched: NoiseSchedule
    needs_noise: bool

    def predict_x0(self, x: np.ndarray, t: int, noise: np.ndarray | None = None) -> np.ndarray: ...

    def posterior_var(self, x: np.ndarray, t: int) -> np.ndarray: ...

    @property
    def shape(self) -> tuple[int, int, int]: ...


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    return x, False


def gmm_posterior_moments(
    x: np.ndarray, t: int, sched: NoiseSchedule, gmm: GaussianMixture
) -> tuple[np.ndarray, np.ndarray]:
    """
    逐元素后验均值与后验方差

    给定成分 k，x_t ~ N(√ᾱ_t μ_k, v_k·I)，v_k = ᾱ_t s_k² + 1 - ᾱ_t；
    成分内后验均值 μ_k + (√ᾱ_t s_k²/v_k)(x - √ᾱ_t μ_k)，后验方差 s_k²(1-ᾱ_t)/v_k。
    责任度在对数空间用 logsumexp 归一化。
    """
    sched.check_t(t)
    xb, single = _as_batch(x)
    if xb.shape[1:] != gmm.shape:
        raise ValueError(f"输入形状 {xb.shape[1:]} 与混合分布 {gmm.shape} 不一致")
    ab = sched.alpha_bar[t]
    sab = np.sqrt(ab)
    s2 = gmm.variances
    v = ab * s2 + (1.0 - ab)
    gain = (sab * s2 / v).reshape(-1, 1, 1, 1)
    pvar = s2 * (1.0 - ab) / v

    # (N, K, C, H, W)
    resid = xb[:, None] - sab * gmm.means[None]
    means_k = gmm.means[None] + gain[None] * resid

    if gmm.K == 1:
        mean = means_k[:, 0]
        var = np.full_like(mean, pvar[0])
    else:
        sq = np.sum(resid.reshape(resid.shape[0], gmm.K, -1) ** 2, axis=-1)
        logp = np.log(gmm.weights) - 0.5 * gmm.dim * np.log(2 * np.pi * v) - sq / (2 * v)
        resp = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
        r = resp.reshape(resp.shape + (1, 1, 1))
        mean = np.sum(r * means_k, axis=1)
        second = np.sum(r * (pvar.reshape(1, -1, 1, 1, 1) + means_k**2), axis=1)
        var = np.maximum(second - mean**2, 0.0)

    if single:
        return mean[0], var[0]
    return mean, var


def gmm_posterior_x0(
    x: np.ndarray, t: int, sched: NoiseSchedule, gmm: GaussianMixture
) -> np.ndarray:
    """精确后验均值 E[x₀|x_t]"""
    return gmm_posterior_moments(x, t, sched, gmm)[0]


def x0_to_eps(x: np.ndarray, x0_hat: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """ε̂ = (x - √ᾱ_t·x̂₀)/√(1-ᾱ_t)"""
    check_same_shape(x, x0_hat)
    sched.check_t(t)
    ab = sched.alpha_bar[t]
    if ab >= 1.0:
        raise ValueError(f"t={t} 处 ᾱ_t = 1，无法换算 ε")
    return (np.asarray(x) - np.sqrt(ab) * np.asarray(x0_hat)) / np.sqrt(1.0 - ab)


def eps_to_x0(x: np.ndarray, eps_hat: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """x̂₀ = (x - √(1-ᾱ_t)·ε̂)/√ᾱ_t"""
    check_same_shape(x, eps_hat)
    sched.check_t(t)
    ab = sched.alpha_bar[t]
    return (np.asarray(x) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)


def apply_bias(x0: np.ndarray, gamma: float, phi: float, noise: np.ndarray | None) -> np.ndarray:
    """γ·x₀ + φ·noise；恒等配置原样返回输入"""
    if gamma == 1.0 and phi == 0.0:
        return x0
    out = gamma * np.asarray(x0)
    if phi != 0.0:
        if noise is None:
            raise ValueError("φ_t > 0 时必须提供偏差噪声")
        check_same_shape(x0, noise)
        out = out + phi * np.asarray(noise)
    return out


def biased_x0(
    inner: Denoiser, bias: BiasProfile, x: np.ndarray, t: int, noise: np.ndarray | None
) -> np.ndarray:
    """γ_t·inner(x, t) + φ_t·noise"""
    return apply_bias(inner.predict_x0(x, t), bias.gamma[t], bias.phi[t], noise)


class ExactDenoiser:
    """高斯混合上的 Bayes 最优去噪器"""

    needs_noise = False

    def __init__(self, sched: NoiseSchedule, gmm: GaussianMixture):
        self.sched = sched
        self.gmm = gmm

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.gmm.shape

    def predict_x0(self, x: np.ndarray, t: int, noise: np.ndarray | None = None) -> np.ndarray:
        return gmm_posterior_x0(x, t, self.sched, self.gmm)

    def posterior_var(self, x: np.ndarray, t: int) -> np.ndarray:
        return gmm_posterior_moments(x, t, self.sched, self.gmm)[1]


class BiasedDenoiser:
    """
    受控偏差去噪器

    x⁰_θ = γ_t·inner(x_t, t) + φ_t·n，n 由调用方从 bias_noise 流抽取，
    与 x₀ 和前向噪声独立。后验方差直接取内层去噪器的值。
    """

    def __init__(self, inner: Denoiser, bias: BiasProfile):
        if bias.T != inner.sched.T:
            raise ValueError(f"偏差配置长度 T={bias.T} 与调度 T={inner.sched.T} 不一致")
        self.inner = inner
        self.bias = bias
        self.sched = inner.sched
        logger.debug("偏差去噪器: M = %.4g, identity = %s", bias.bound, bias.is_identity)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.inner.shape

    @property
    def needs_noise(self) -> bool:
        return not self.bias.is_identity

    def predict_x0(self, x: np.ndarray, t: int, noise: np.ndarray | None = None) -> np.ndarray:
        return biased_x0(self.inner, self.bias, x, t, noise)

    def posterior_var(self, x: np.ndarray, t: int) -> np.ndarray:
        return self.inner.posterior_var(x, t)
