"""
诊断实验

- sliding_window: 固定网络时间步 s，输入不同 t 的前向样本
- forward_vs_reverse: 前向样本与反向链样本上的 ε 预测范数
- reconstruction_norms: x⁰_θ 的范数与 E‖x₀‖² 的比较
- estimate_gamma_psi: 教师强制一步，矩匹配估计 γ̂ 与噪声尺度

前向样本对所有 t 共用同一组 (x₀, ε)，所以各 t 之间是公共随机数。
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..models.correction import CorrectionConfig
from ..models.grid import MomentStats
from ..models.mixture import BiasProfile, GaussianMixture
from ..models.schedule import NoiseSchedule
from .denoiser import Denoiser, apply_bias, x0_to_eps
from .rng import Purpose, block_data, block_normal, map_blocks
from .sampler import forward_perturb, posterior_step, run_reverse
from .theory import biased_step_law

logger = logging.getLogger(__name__)


def _require_single(data: GaussianMixture) -> tuple[np.ndarray, float]:
    if data.K != 1:
        raise ValueError(f"闭式解只适用于单高斯数据，收到 K={data.K}")
    return data.means[0], float(data.variances[0])


def _bias_noise(model: Denoiser, seed: int, t: int, block: int, n: int) -> np.ndarray | None:
    if not model.needs_noise:
        return None
    return block_normal(seed, Purpose.BIAS_NOISE, t, block, n, model.shape)


def _forward_pair(seed: int, block: int, n: int, data: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    x0 = block_data(seed, block, n, data)
    eps = block_normal(seed, Purpose.FORWARD_NOISE, 0, block, n, data.shape)
    return x0, eps


def _merge_columns(parts: list[list[MomentStats]]) -> list[MomentStats]:
    merged = parts[0]
    for p in parts[1:]:
        merged = [a.merge(b) for a, b in zip(merged, p)]
    return merged


# ---------------------------------------------------------------------------
# 滑动窗口
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SlidingWindowResult:
    """s × t 矩阵：E‖ε̂(x_t, s)‖²/dim 及其标准误"""

    s_list: list[int]
    t_list: list[int]
    mean: np.ndarray
    stderr: np.ndarray
    n: int

    HEADER = "s,t,mean,stderr,n"

    def table(self) -> np.ndarray:
        rows = [
            (s, t, self.mean[i, j], self.stderr[i, j], self.n)
            for i, s in enumerate(self.s_list)
            for j, t in enumerate(self.t_list)
        ]
        return np.array(rows, dtype=np.float64).reshape(-1, 5)


def sliding_window_closed_form(
    sched: NoiseSchedule, data: GaussianMixture, s: int, t: int
) -> float:
    """
    单高斯数据、精确去噪器下的闭式值

    ε̂(x, s) = √(1-ᾱ_s)·(x - √ᾱ_s μ)/v_s，v_s = ᾱ_s s₀² + 1 - ᾱ_s；
    零均值时为 (1-ᾱ_s)(ᾱ_t s₀² + 1-ᾱ_t)/v_s²。
    """
    mu, s2 = _require_single(data)
    ab_s, ab_t = sched.alpha_bar[s], sched.alpha_bar[t]
    v_s = ab_s * s2 + 1.0 - ab_s
    v_t = ab_t * s2 + 1.0 - ab_t
    shift = (math.sqrt(ab_t) - math.sqrt(ab_s)) ** 2 * float(np.mean(mu**2))
    return float((1.0 - ab_s) * (v_t + shift) / v_s**2)


def sliding_window(
    model: Denoiser,
    sched: NoiseSchedule,
    data: GaussianMixture,
    s_list: list[int],
    t_list: list[int],
    n: int,
    seed: int,
    threads: int = 1,
) -> SlidingWindowResult:
    """对每个 (s, t) 格子做蒙特卡洛平均"""
    if not s_list or not t_list:
        raise ValueError("s_list 与 t_list 都不能为空")
    if n < 1:
        raise ValueError(f"样本数必须至少为 1，收到 {n}")
    for step in list(s_list) + list(t_list):
        sched.check_t(step)

    def run_block(block: int, start: int, stop: int) -> list[MomentStats]:
        m = stop - start
        x0, eps = _forward_pair(seed, block, m, data)
        cells = []
        for s in s_list:
            noise = _bias_noise(model, seed, s, block, m)
            for t in t_list:
                x_t = forward_perturb(x0, t, eps, sched)
                eps_hat = x0_to_eps(x_t, model.predict_x0(x_t, s, noise), s, sched)
                cells.append(MomentStats.from_batch(eps_hat))
        return cells

    merged = _merge_columns(map_blocks(run_block, n, threads))
    shape = (len(s_list), len(t_list))
    mean = np.array([c.mean_sq_norm for c in merged]).reshape(shape)
    stderr = np.array([c.stderr for c in merged]).reshape(shape)
    logger.debug("sliding_window 完成: %d×%d 格, n=%d", *shape, n)
    return SlidingWindowResult(list(s_list), list(t_list), mean, stderr, n)


# ---------------------------------------------------------------------------
# 前向 vs 反向
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormCurves:
    """t = 1..T 上的两条曲线及其标准误"""

    t: np.ndarray
    forward: np.ndarray
    reverse: np.ndarray
    stderr_f: np.ndarray
    stderr_r: np.ndarray

    HEADER = "t,forward,reverse,stderr_f,stderr_r"

    def table(self) -> np.ndarray:
        return np.column_stack([self.t, self.forward, self.reverse, self.stderr_f, self.stderr_r])

    def dominance(self) -> float:
        """reverse ≥ forward 的时间步比例"""
        return float(np.mean(self.reverse >= self.forward))

    def coincide(self, k: float = 3.0) -> np.ndarray:
        """逐 t 判断两条曲线之差是否在 k 倍合成标准误以内"""
        se = np.sqrt(self.stderr_f**2 + self.stderr_r**2)
        return np.abs(self.reverse - self.forward) <= k * se


def _forward_curve(
    model: Denoiser,
    sched: NoiseSchedule,
    data: GaussianMixture,
    n: int,
    seed: int,
    threads: int,
    what: str,
) -> list[MomentStats]:
    """前向样本上每个 t 的 ε̂ 或 x̂₀ 矩统计，t = 1..T"""

    def run_block(block: int, start: int, stop: int) -> list[MomentStats]:
        m = stop - start
        x0, eps = _forward_pair(seed, block, m, data)
        out = []
        for t in range(1, sched.T + 1):
            x_t = forward_perturb(x0, t, eps, sched)
            x0_hat = model.predict_x0(x_t, t, _bias_noise(model, seed, t, block, m))
            if what == "eps":
                out.append(MomentStats.from_batch(x0_to_eps(x_t, x0_hat, t, sched)))
            else:
                out.append(MomentStats.from_batch(x0_hat))
        if what == "x0":
            out.append(MomentStats.from_batch(x0))
        return out

    return _merge_columns(map_blocks(run_block, n, threads))


def forward_vs_reverse(
    model: Denoiser,
    sched: NoiseSchedule,
    data: GaussianMixture,
    corr: CorrectionConfig,
    n: int,
    seed: int,
    threads: int = 1,
) -> NormCurves:
    """
    E‖ε_θ(x_t, t)‖²/dim（前向）与 E‖ε_θ(x̂_t, t)‖²/dim（反向链）
    """
    fwd = _forward_curve(model, sched, data, n, seed, threads, "eps")
    traj = run_reverse(model, sched, corr, n, seed, threads=threads)
    ts = np.arange(1, sched.T + 1)
    rev = [traj.eps_stats[int(t)] for t in ts]
    curves = NormCurves(
        t=ts,
        forward=np.array([m.mean_sq_norm for m in fwd]),
        reverse=np.array([m.mean_sq_norm for m in rev]),
        stderr_f=np.array([m.stderr for m in fwd]),
        stderr_r=np.array([m.stderr for m in rev]),
    )
    logger.debug("forward_vs_reverse seed=%d n=%d: dominance=%.3f", seed, n, curves.dominance())
    return curves


# ---------------------------------------------------------------------------
# 重建范数
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReconCurves:
    t: np.ndarray
    forward: np.ndarray
    reverse: np.ndarray
    data: float
    stderr_f: np.ndarray
    stderr_r: np.ndarray
    stderr_d: float

    HEADER = "t,forward,reverse,data,stderr_f,stderr_r,stderr_d"

    def table(self) -> np.ndarray:
        k = self.t.size
        return np.column_stack(
            [
                self.t,
                self.forward,
                self.reverse,
                np.full(k, self.data),
                self.stderr_f,
                self.stderr_r,
                np.full(k, self.stderr_d),
            ]
        )


def recon_closed_form(sched: NoiseSchedule, data: GaussianMixture, t: int) -> float:
    """单高斯精确去噪器：E‖x⁰_θ(x_t,t)‖²/dim = mean(μ²) + ᾱ_t s₀⁴/(ᾱ_t s₀² + 1-ᾱ_t)"""
    mu, s2 = _require_single(data)
    ab = sched.alpha_bar[t]
    return float(np.mean(mu**2) + ab * s2**2 / (ab * s2 + 1.0 - ab))


def reconstruction_norms(
    model: Denoiser,
    sched: NoiseSchedule,
    data: GaussianMixture,
    n: int,
    seed: int,
    threads: int = 1,
    corr: CorrectionConfig | None = None,
) -> ReconCurves:
    """前向输入与反向链输入上的 E‖x⁰_θ‖²/dim，以及 E‖x₀‖²/dim"""
    fwd = _forward_curve(model, sched, data, n, seed, threads, "x0")
    data_stats = fwd.pop()
    traj = run_reverse(model, sched, corr or CorrectionConfig(), n, seed, threads=threads)
    ts = np.arange(1, sched.T + 1)
    rev = [traj.x0_stats[int(t)] for t in ts]
    return ReconCurves(
        t=ts,
        forward=np.array([m.mean_sq_norm for m in fwd]),
        reverse=np.array([m.mean_sq_norm for m in rev]),
        data=data_stats.mean_sq_norm,
        stderr_f=np.array([m.stderr for m in fwd]),
        stderr_r=np.array([m.stderr for m in rev]),
        stderr_d=data_stats.stderr,
    )


# ---------------------------------------------------------------------------
# γ̂ / ψ 估计
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaPsiEstimate:
    """教师强制一步的矩匹配估计及对应理论值"""

    t: int
    n: int
    coef_x0: float
    coef_x0_stderr: float
    gamma_hat: float
    gamma_hat_stderr: float
    noise_std: float
    noise_std_stderr: float
    coef_theory: float
    gamma_hat_theory: float
    noise_std_theory: float
    snr: float
    snr_theory: float

    HEADER = (
        "t,gamma_hat_emp,gamma_hat_stderr,noise_std_emp,noise_std_stderr,"
        "gamma_hat_theory,noise_std_theory,snr_emp,snr_theory"
    )

    def row(self) -> tuple[float, ...]:
        return (
            self.t,
            self.gamma_hat,
            self.gamma_hat_stderr,
            self.noise_std,
            self.noise_std_stderr,
            self.gamma_hat_theory,
            self.noise_std_theory,
            self.snr,
            self.snr_theory,
        )


@dataclass
class _CrossSums:
    """逐坐标的充分统计量 Σx, Σy, Σx², Σy², Σxy"""

    n: int
    sx: np.ndarray
    sy: np.ndarray
    sxx: np.ndarray
    syy: np.ndarray
    sxy: np.ndarray

    @classmethod
    def from_batch(cls, x: np.ndarray, y: np.ndarray) -> "_CrossSums":
        return cls(
            n=x.shape[0],
            sx=x.sum(axis=0),
            sy=y.sum(axis=0),
            sxx=(x * x).sum(axis=0),
            syy=(y * y).sum(axis=0),
            sxy=(x * y).sum(axis=0),
        )

    def merge(self, other: "_CrossSums") -> "_CrossSums":
        return _CrossSums(
            self.n + other.n,
            self.sx + other.sx,
            self.sy + other.sy,
            self.sxx + other.sxx,
            self.syy + other.syy,
            self.sxy + other.sxy,
        )


def teacher_forced_step(
    x0: np.ndarray,
    eps: np.ndarray,
    noise: np.ndarray,
    z: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    profile: BiasProfile,
) -> np.ndarray:
    """
    教师强制一步：x_t 取前向真值，重建取 γ_t·x₀ + φ_t·noise，
    再走一步 σ = √β̃_t 的后验步
    """
    x_t = forward_perturb(x0, t, eps, sched)
    x0_hat = apply_bias(x0, profile.gamma[t], profile.phi[t], noise)
    return posterior_step(x_t, x0_hat, z, t, sched)


def estimate_gamma_psi(
    sched: NoiseSchedule,
    data: GaussianMixture,
    profile: BiasProfile,
    t: int,
    n: int,
    seed: int,
    threads: int = 1,
) -> GammaPsiEstimate:
    """
    x̂_{t-1} 对 x₀ 的合并最小二乘回归

    逐坐标中心化后斜率 b = Σxy/Σxx，γ̂ = b/√ᾱ_{t-1}；
    残差方差给出噪声标准差。中心化使估计与 μ₀ 无关。
    """
    _, s2 = _require_single(data)
    if s2 <= 0:
        raise ValueError("数据方差必须为正")
    t = sched.check_t(t)
    if n < 3:
        raise ValueError(f"样本数至少为 3，收到 {n}")
    shape = data.shape

    def run_block(block: int, start: int, stop: int) -> _CrossSums:
        m = stop - start
        x0, eps = _forward_pair(seed, block, m, data)
        noise = block_normal(seed, Purpose.BIAS_NOISE, t, block, m, shape)
        z = block_normal(seed, Purpose.STEP_NOISE, t, block, m, shape)
        y = teacher_forced_step(x0, eps, noise, z, t, sched, profile)
        return _CrossSums.from_batch(x0.reshape(m, -1), y.reshape(m, -1))

    parts = map_blocks(run_block, n, threads)
    sums = parts[0]
    for p in parts[1:]:
        sums = sums.merge(p)

    sxx = np.sum(sums.sxx - sums.sx**2 / sums.n)
    syy = np.sum(sums.syy - sums.sy**2 / sums.n)
    sxy = np.sum(sums.sxy - sums.sx * sums.sy / sums.n)
    dim = sums.sx.size
    dof = sums.n * dim - dim - 1
    slope = sxy / sxx
    resid_var = max(syy - slope * sxy, 0.0) / dof

    scale = math.sqrt(sched.alpha_bar[t - 1])
    coef_theory, noise_theory = biased_step_law(profile.gamma[t], profile.phi[t], t, sched)
    noise_std = math.sqrt(resid_var)
    slope_stderr = math.sqrt(resid_var / sxx)
    return GammaPsiEstimate(
        t=t,
        n=n,
        coef_x0=float(slope),
        coef_x0_stderr=float(slope_stderr),
        gamma_hat=float(slope / scale),
        gamma_hat_stderr=float(slope_stderr / scale),
        noise_std=noise_std,
        noise_std_stderr=noise_std / math.sqrt(2.0 * dof),
        coef_theory=coef_theory,
        gamma_hat_theory=coef_theory / scale,
        noise_std_theory=noise_theory,
        snr=float(slope**2 / resid_var) if resid_var > 0 else math.inf,
        snr_theory=coef_theory**2 / noise_theory**2,
    )
