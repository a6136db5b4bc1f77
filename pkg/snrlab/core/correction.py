"""
差分校正

像素域 DC：x ← x + λ·(x - x⁰_θ)
小波域 DCW：对四个子带分别做同样的校正再做 iDWT。
"""

import numpy as np

from ..models.correction import CorrectionConfig, CorrectionMode, Weights, WeightKind
from ..models.grid import check_same_shape
from ..models.schedule import NoiseSchedule
from .wavelet import SUBBANDS, SubbandSet, dwt_haar, idwt_haar


def dc_pixel(x_next: np.ndarray, x0_hat: np.ndarray, lambda_t: float) -> np.ndarray:
    """(1+λ)·x_next - λ·x0_hat；λ = 0 时原样返回"""
    check_same_shape(x_next, x0_hat)
    if lambda_t == 0.0:
        return x_next
    return (1.0 + lambda_t) * np.asarray(x_next) - lambda_t * np.asarray(x0_hat)


def dcw_apply(
    x_next: np.ndarray, x0_hat: np.ndarray, lambdas: dict[str, float]
) -> np.ndarray:
    """按子带系数 {ll, lh, hl, hh} 校正；未给出的子带系数为 0"""
    check_same_shape(x_next, x0_hat)
    unknown = set(lambdas) - set(SUBBANDS)
    if unknown:
        raise ValueError(f"未知子带: {sorted(unknown)}")
    if all(lambdas.get(f, 0.0) == 0.0 for f in SUBBANDS):
        return x_next
    sx, s0 = dwt_haar(x_next), dwt_haar(x0_hat)
    corrected = SubbandSet(
        **{
            f: dc_pixel(getattr(sx, f), getattr(s0, f), lambdas.get(f, 0.0))
            for f in SUBBANDS
        }
    )
    return idwt_haar(corrected)


def weights_variance(t: int, sched: NoiseSchedule, lambda_l: float, lambda_h: float) -> Weights:
    """low = λ_l·σ_t，high = (1-λ_h)·σ_t"""
    sigma = sched.sigma(t)
    return Weights(low=lambda_l * sigma, high=(1.0 - lambda_h) * sigma)


def weights_piecewise(t: int, t_s: int, w_l: float, w_h: float) -> Weights:
    """low 在 t ≥ t_s 时生效，high 在 t < t_s 时生效"""
    return Weights(low=w_l if t >= t_s else 0.0, high=w_h if t < t_s else 0.0)


def weights_constant(w_l: float, w_h: float) -> Weights:
    return Weights(low=w_l, high=w_h)


def weights_for(corr: CorrectionConfig, t: int, sched: NoiseSchedule) -> Weights:
    """按 weight_kind 计算时间步 t 的系数"""
    if corr.weight_kind is WeightKind.VARIANCE:
        return weights_variance(t, sched, corr.lambda_l, corr.lambda_h)
    if corr.weight_kind is WeightKind.PIECEWISE:
        if corr.t_s > sched.T:
            raise ValueError(f"t_s={corr.t_s} 超出 T={sched.T}")
        return weights_piecewise(t, corr.t_s, corr.w_l, corr.w_h)
    return weights_constant(corr.w_l, corr.w_h)


def apply_variant(
    mode: CorrectionMode | str, x_next: np.ndarray, x0_hat: np.ndarray, weights: Weights
) -> np.ndarray:
    """
    四种消融变体

    - DC: 像素域，使用 low 系数
    - DL: 仅 ll 子带，使用 low 系数
    - DH: 仅 lh/hl/hh 子带，使用 high 系数
    - DCW: ll 用 low，其余用 high
    """
    mode = CorrectionMode(mode)
    if mode is CorrectionMode.NONE:
        return x_next
    if mode is CorrectionMode.DC:
        return dc_pixel(x_next, x0_hat, weights.low)
    if mode is CorrectionMode.DL:
        return dcw_apply(x_next, x0_hat, {"ll": weights.low})
    if mode is CorrectionMode.DH:
        return dcw_apply(x_next, x0_hat, {f: weights.high for f in SUBBANDS[1:]})
    return dcw_apply(
        x_next, x0_hat, {"ll": weights.low, **{f: weights.high for f in SUBBANDS[1:]}}
    )
