"""
样本质量指标：能量距离与切片 Wasserstein 距离

两者都把网格展平成向量后计算；能量距离用 V 统计量，
两两距离按块计算，内存 O(chunk·n)。
"""

import logging
import math

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from .rng import Purpose, stream

logger = logging.getLogger(__name__)

PAIR_CHUNK = 1024


def _flatten(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[0] == 0:
        raise ValueError(f"样本集 {name} 为空")
    return x.reshape(x.shape[0], -1)


def _row_sums(a: np.ndarray, b: np.ndarray, chunk: int = PAIR_CHUNK) -> np.ndarray:
    """Σ_j ‖a_i - b_j‖，逐块计算"""
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], chunk):
        out[start : start + chunk] = cdist(a[start : start + chunk], b).sum(axis=1)
    return out


def _cross_sums(a: np.ndarray, b: np.ndarray, chunk: int = PAIR_CHUNK) -> tuple[np.ndarray, np.ndarray]:
    """一次遍历同时得到行和与列和"""
    rows = np.empty(a.shape[0])
    cols = np.zeros(b.shape[0])
    for start in range(0, a.shape[0], chunk):
        d = cdist(a[start : start + chunk], b)
        rows[start : start + chunk] = d.sum(axis=1)
        cols += d.sum(axis=0)
    return rows, cols


class EnergyDistance:
    """
    以固定参考集 b 计算能量距离

    参考集内部的两两距离只计算一次，搜索中所有网格点共用。
    """

    def __init__(self, reference: np.ndarray, chunk: int = PAIR_CHUNK):
        self.b = _flatten(reference, "b")
        self.chunk = chunk
        self.r_bb = _row_sums(self.b, self.b, chunk)
        self.s_bb = float(np.sum(self.r_bb))

    def __call__(self, samples: np.ndarray) -> tuple[float, float]:
        """返回 (V 统计量, 删一刀切标准误)"""
        a = _flatten(samples, "a")
        if a.shape[1] != self.b.shape[1]:
            raise ValueError(f"样本维度不一致: {a.shape[1]} vs {self.b.shape[1]}")
        n, m = a.shape[0], self.b.shape[0]
        r_ab, c_ab = _cross_sums(a, self.b, self.chunk)
        r_aa = _row_sums(a, a, self.chunk)
        s_ab, s_aa = float(np.sum(r_ab)), float(np.sum(r_aa))

        value = 2.0 * s_ab / (n * m) - s_aa / n**2 - self.s_bb / m**2
        return value, self._jackknife(n, m, s_ab, s_aa, r_ab, c_ab, r_aa)

    def _jackknife(self, n, m, s_ab, s_aa, r_ab, c_ab, r_aa) -> float:
        if n < 2 or m < 2:
            return math.nan
        e_bb = self.s_bb / m**2
        loo_a = 2.0 * (s_ab - r_ab) / ((n - 1) * m) - (s_aa - 2.0 * r_aa) / (n - 1) ** 2 - e_bb
        e_aa = s_aa / n**2
        loo_b = 2.0 * (s_ab - c_ab) / (n * (m - 1)) - e_aa - (self.s_bb - 2.0 * self.r_bb) / (m - 1) ** 2
        var_a = (n - 1) / n * np.sum((loo_a - loo_a.mean()) ** 2)
        var_b = (m - 1) / m * np.sum((loo_b - loo_b.mean()) ** 2)
        return float(math.sqrt(var_a + var_b))


def energy_distance_with_stderr(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    return EnergyDistance(b)(a)


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """2·E‖A-B‖ - E‖A-A'‖ - E‖B-B'‖（V 统计量）"""
    return energy_distance_with_stderr(a, b)[0]


def projections(dim: int, n_proj: int, seed: int) -> np.ndarray:
    """n_proj 个随机单位方向，形状 (n_proj, dim)"""
    if n_proj < 1:
        raise ValueError(f"n_proj 必须至少为 1，收到 {n_proj}")
    d = stream(seed, Purpose.PROJECTION).standard_normal((n_proj, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sliced_wasserstein(a: np.ndarray, b: np.ndarray, n_proj: int, seed: int) -> float:
    """随机单位方向上一维 W₁ 距离的平均"""
    a, b = _flatten(a, "a"), _flatten(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"样本维度不一致: {a.shape[1]} vs {b.shape[1]}")
    dirs = projections(a.shape[1], n_proj, seed)
    pa, pb = a @ dirs.T, b @ dirs.T
    return float(np.mean([wasserstein_distance(pa[:, k], pb[:, k]) for k in range(n_proj)]))
