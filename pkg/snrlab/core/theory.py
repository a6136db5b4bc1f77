"""
偏差理论的闭式量

在重建偏差 x⁰_θ = γ_t·x₀ + φ_t·ε 下，一步反向后验步给出
x̂_{t-1} = γ̂_{t-1}√ᾱ_{t-1}·x₀ + noise_std·ε。所有函数都是
(BiasProfile, NoiseSchedule) 的纯函数；内部以方差计算，对外给出标准差。
"""

import math
from dataclasses import dataclass

import numpy as np

from ..models.mixture import BiasProfile
from ..models.schedule import NoiseSchedule


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"γ 必须位于 (0, 1]，收到 {gamma}")


def _bias_coef(t: int, sched: NoiseSchedule) -> float:
    """√ᾱ_{t-1}·β_t/(1-ᾱ_t)，即后验均值中 x̂₀ 的系数"""
    return sched.posterior_coefs(t)[0]


def gamma_hat_step(gamma_t: float, t: int, sched: NoiseSchedule) -> float:
    """γ̂_{t-1} = ((1-α_t)·γ_t + α_t·(1-ᾱ_{t-1}))/(1-ᾱ_t)"""
    _check_gamma(gamma_t)
    t = sched.check_t(t)
    a, ab, ab_prev = sched.alpha[t], sched.alpha_bar[t], sched.alpha_bar[t - 1]
    if gamma_t == 1.0:
        return 1.0
    return float(((1.0 - a) * gamma_t + a * (1.0 - ab_prev)) / (1.0 - ab))


def biased_step_law(
    gamma_t: float, phi_t: float, t: int, sched: NoiseSchedule
) -> tuple[float, float]:
    """一步偏差后验步的 (x₀ 系数, 噪声标准差)"""
    t = sched.check_t(t)
    ab_prev = sched.alpha_bar[t - 1]
    coef_x0 = gamma_hat_step(gamma_t, t, sched) * math.sqrt(ab_prev)
    inflation = (_bias_coef(t, sched) * phi_t) ** 2
    return coef_x0, math.sqrt(1.0 - ab_prev + inflation)


def psi(gamma_hat_prev: float, phi_t: float, t: int, sched: NoiseSchedule) -> float:
    """ψ_{t-1} = √((√ᾱ_{t-1}β_t·φ_t/(1-ᾱ_t))² + (1-γ̂²_{t-1})(1-ᾱ_{t-1}))"""
    _check_gamma(gamma_hat_prev)
    t = sched.check_t(t)
    ab_prev = sched.alpha_bar[t - 1]
    var = (_bias_coef(t, sched) * phi_t) ** 2 + (1.0 - gamma_hat_prev**2) * (1.0 - ab_prev)
    return math.sqrt(var)


def snr_theorem(gamma_hat_t: float, phi_next: float, t: int, sched: NoiseSchedule) -> float:
    """
    偏差样本的实际 SNR

    γ̂_t²·ᾱ_t / (1 - ᾱ_t + (√ᾱ_t·β_{t+1}/(1-ᾱ_{t+1})·φ_{t+1})²)，要求 1 ≤ t < T。
    """
    _check_gamma(gamma_hat_t)
    if not 1 <= t < sched.T:
        raise ValueError(f"snr_theorem 需要 1 <= t < T={sched.T}，收到 t={t}")
    ab = sched.alpha_bar[t]
    inflation = (_bias_coef(t + 1, sched) * phi_next) ** 2
    return float(gamma_hat_t**2 * ab / (1.0 - ab + inflation))


def eta(phi_t: float, psi_prev: float) -> float:
    """η_t = √(φ_t² + ψ_{t-1}²)"""
    if phi_t < 0 or psi_prev < 0:
        raise ValueError(f"η 的输入必须非负，收到 ({phi_t}, {psi_prev})")
    return math.hypot(phi_t, psi_prev)


@dataclass(frozen=True, eq=False)
class TheoryCurves:
    """t = 1..T-1 上的理论曲线"""

    t: np.ndarray
    gamma_hat: np.ndarray
    psi: np.ndarray
    snr_forward: np.ndarray
    snr_reverse: np.ndarray
    eta: np.ndarray

    HEADER = "t,gamma_hat,psi,snr_forward,snr_reverse,eta"

    def table(self) -> np.ndarray:
        return np.column_stack(
            [self.t, self.gamma_hat, self.psi, self.snr_forward, self.snr_reverse, self.eta]
        )


def theory_curves(profile: BiasProfile, sched: NoiseSchedule) -> TheoryCurves:
    """
    逐 t 计算

    γ̂_t 与 ψ_t 由第 t+1 步的 (γ, φ) 得到；η_t 用 φ_t 与 ψ_{t-1}。
    """
    if profile.T != sched.T:
        raise ValueError(f"偏差配置 T={profile.T} 与调度 T={sched.T} 不一致")
    ts = np.arange(1, sched.T)
    g_hat, ps, snr_f, snr_r, etas = [], [], [], [], []
    for t in ts:
        gh = gamma_hat_step(profile.gamma[t + 1], t + 1, sched)
        g_hat.append(gh)
        ps.append(psi(gh, profile.phi[t + 1], t + 1, sched))
        snr_f.append(sched.snr(t))
        snr_r.append(snr_theorem(gh, profile.phi[t + 1], t, sched))
        gh_prev = gamma_hat_step(profile.gamma[t], t, sched)
        etas.append(eta(profile.phi[t], psi(gh_prev, profile.phi[t], t, sched)))
    return TheoryCurves(
        t=ts,
        gamma_hat=np.array(g_hat),
        psi=np.array(ps),
        snr_forward=np.array(snr_f),
        snr_reverse=np.array(snr_r),
        eta=np.array(etas),
    )


@dataclass(frozen=True, eq=False)
class CompoundCurves:
    """整条反向链累积后的信号系数与噪声（探索性）"""

    t: np.ndarray
    gamma_hat: np.ndarray
    noise_std: np.ndarray
    snr_reverse: np.ndarray

    HEADER = "t,gamma_hat,noise_std,snr_reverse"

    def table(self) -> np.ndarray:
        return np.column_stack([self.t, self.gamma_hat, self.noise_std, self.snr_reverse])


def compound_curves(profile: BiasProfile, sched: NoiseSchedule) -> CompoundCurves:
    """
    从 x_T 的前向分布出发，逐步传播

    x̂_{t-1} 的 x₀ 系数 s_{t-1} = c₀·γ_t + c_t·s_t，
    噪声方差 n_{t-1} = c₀²·φ_t² + c_t²·n_t + β̃_t。
    """
    if profile.T != sched.T:
        raise ValueError(f"偏差配置 T={profile.T} 与调度 T={sched.T} 不一致")
    signal = math.sqrt(sched.alpha_bar[sched.T])
    noise = 1.0 - sched.alpha_bar[sched.T]
    rows = []
    for t in range(sched.T, 1, -1):
        c_x0, c_xt = sched.posterior_coefs(t)
        signal = c_x0 * profile.gamma[t] + c_xt * signal
        noise = c_x0**2 * profile.phi[t] ** 2 + c_xt**2 * noise + sched.beta_tilde[t]
        ab = sched.alpha_bar[t - 1]
        rows.append((t - 1, signal / math.sqrt(ab), math.sqrt(noise), signal**2 / noise))
    rows.reverse()
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return CompoundCurves(t=arr[:, 0].astype(int), gamma_hat=arr[:, 1], noise_std=arr[:, 2], snr_reverse=arr[:, 3])
