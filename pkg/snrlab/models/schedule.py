"""噪声调度：前向/反向过程与理论公式用到的所有逐步标量"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


MAX_SCALED_BETA = 0.999


class ScheduleError(ValueError):
    """调度参数或时间步越界"""


class SigmaMode(str, Enum):
    """反向方差约定

    - large: σ_t² = β_t
    - small: σ_t² = β̃_t
    - posterior: 调度部分为 β̃_t，采样器再加上 c₁²·Var[x₀|x_t]（由去噪器给出）
    """

    LARGE = "large"
    SMALL = "small"
    POSTERIOR = "posterior"


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    噪声调度

    所有数组长度为 T+1，下标即时间步；下标 0 为约定值
    (β_0 = 0, ᾱ_0 = 1, β̃_0 = 0)，有效时间步为 1..T。
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray
    sigma_mode: SigmaMode = SigmaMode.SMALL

    @classmethod
    def from_betas(
        cls, betas: np.ndarray, sigma_mode: SigmaMode | str = SigmaMode.SMALL
    ) -> "NoiseSchedule":
        """由 β_1..β_T 构造并填充所有派生数组"""
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ScheduleError("β 序列必须是非空一维数组")
        if not np.all((betas > 0) & (betas < 1)):
            raise ScheduleError("β_t 必须全部位于 (0, 1)")

        T = int(betas.size)
        beta = np.concatenate([[0.0], betas])
        alpha = 1.0 - beta
        # 逐项累乘，保证 ᾱ_t = ᾱ_{t-1}·α_t 精确成立
        alpha_bar = np.cumprod(alpha)
        beta_tilde = np.zeros_like(beta)
        beta_tilde[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]

        for arr in (beta, alpha, alpha_bar, beta_tilde):
            arr.setflags(write=False)
        return cls(
            T=T,
            beta=beta,
            alpha=alpha,
            alpha_bar=alpha_bar,
            beta_tilde=beta_tilde,
            sigma_mode=SigmaMode(sigma_mode),
        )

    def check_t(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ScheduleError(f"时间步 t={t} 超出范围 [1, {self.T}]")
        return int(t)

    def snr(self, t: int) -> float:
        """SNR(t) = ᾱ_t / (1 - ᾱ_t)"""
        t = self.check_t(t)
        ab = self.alpha_bar[t]
        return float(ab / (1.0 - ab))

    def sigma(self, t: int) -> float:
        """按 sigma_mode 返回 σ_t；small/posterior 模式下 σ_1 = 0"""
        t = self.check_t(t)
        if self.sigma_mode is SigmaMode.LARGE:
            return math.sqrt(self.beta[t])
        return math.sqrt(self.beta_tilde[t])

    def snr_curve(self) -> np.ndarray:
        """t = 1..T 的 SNR 数组"""
        ab = self.alpha_bar[1:]
        return ab / (1.0 - ab)

    def posterior_coefs(self, t: int) -> tuple[float, float]:
        """
        后验均值 μ̃ 的两个系数

        返回 (x₀ 系数, x_t 系数)：
        √ᾱ_{t-1}·β_t/(1-ᾱ_t) 与 √α_t·(1-ᾱ_{t-1})/(1-ᾱ_t)
        """
        t = self.check_t(t)
        ab, ab_prev = self.alpha_bar[t], self.alpha_bar[t - 1]
        c_x0 = math.sqrt(ab_prev) * self.beta[t] / (1.0 - ab)
        c_xt = math.sqrt(self.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab)
        return c_x0, c_xt

    def to_rows(self) -> list[tuple[int, float, float, float, float, float]]:
        """schedule-dump 的行：t, beta, alpha_bar, beta_tilde, sigma, snr"""
        return [
            (
                t,
                float(self.beta[t]),
                float(self.alpha_bar[t]),
                float(self.beta_tilde[t]),
                self.sigma(t),
                self.snr(t),
            )
            for t in range(1, self.T + 1)
        ]


def scaled_linear_bounds(T: int) -> tuple[float, float]:
    """
    桌面级默认 β 区间

    以 1000 步线性调度为基准按 1000/T 缩放，使短步数下 ᾱ_T 仍接近纯噪声。
    T < 21 时 β_end 会越过 1，截断到 MAX_SCALED_BETA。
    """
    scale = 1000.0 / T
    end = min(0.02 * scale, MAX_SCALED_BETA)
    return min(1e-4 * scale, end), end


def build_linear(
    T: int,
    beta_start: float,
    beta_end: float,
    sigma_mode: SigmaMode | str = SigmaMode.SMALL,
) -> NoiseSchedule:
    """β 从 beta_start 线性到 beta_end（两端包含）"""
    if T < 1:
        raise ScheduleError(f"T 必须为正整数，收到 {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(
            f"要求 0 < beta_start <= beta_end < 1，收到 ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return NoiseSchedule.from_betas(betas, sigma_mode)


def cosine_alpha_bar(t: np.ndarray | float, T: int, s: float) -> np.ndarray:
    """f(t)/f(0)，f(t) = cos²(((t/T + s)/(1+s))·π/2)"""

    def f(u):
        return np.cos((np.asarray(u, dtype=np.float64) / T + s) / (1 + s) * math.pi / 2) ** 2

    return f(t) / f(0.0)


def build_cosine(
    T: int,
    s: float = 0.008,
    max_beta: float = 0.999,
    sigma_mode: SigmaMode | str = SigmaMode.SMALL,
) -> NoiseSchedule:
    """
    余弦调度

    β_t = 1 - ᾱ_t/ᾱ_{t-1} 并截断到 max_beta；ᾱ 由截断后的 β 重新累乘得到。
    """
    if T < 1:
        raise ScheduleError(f"T 必须为正整数，收到 {T}")
    if s <= 0:
        raise ScheduleError(f"余弦偏移 s 必须为正，收到 {s}")
    if not 0 < max_beta < 1:
        raise ScheduleError(f"max_beta 必须位于 (0, 1)，收到 {max_beta}")
    ab = cosine_alpha_bar(np.arange(T + 1), T, s)
    betas = np.minimum(1.0 - ab[1:] / ab[:-1], max_beta)
    return NoiseSchedule.from_betas(betas, sigma_mode)
