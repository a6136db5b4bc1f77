"""
单层正交 Haar 小波

对每个 2×2 块 [[a, b], [c, d]]：
    ll = (a+b+c+d)/2   lh = (a+b-c-d)/2
    hl = (a-b+c-d)/2   hh = (a-b-c+d)/2
输入可以是单个 (C, H, W) 网格或 (N, C, H, W) 批。
"""

from dataclasses import dataclass

import numpy as np

from ..models.grid import GridShapeError, check_grid

# 正交归一化常数；selftest 的负对照会替换它
HAAR_SCALE = 0.5

SUBBANDS = ("ll", "lh", "hl", "hh")


@dataclass(frozen=True, eq=False)
class SubbandSet:
    """四个半分辨率子带"""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(getattr(self, f)) for f in SUBBANDS}
        if len(shapes) != 1:
            raise GridShapeError(f"子带形状不一致: {shapes}")

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.ll)

    def energy(self) -> np.ndarray:
        """四个子带平方和（逐样本）"""
        return sum(
            np.sum(getattr(self, f) ** 2, axis=(-3, -2, -1)) for f in SUBBANDS
        )

    def scaled(self, factors: dict[str, float]) -> "SubbandSet":
        return SubbandSet(**{f: getattr(self, f) * factors.get(f, 1.0) for f in SUBBANDS})


def dwt_haar(x: np.ndarray, scale: float = HAAR_SCALE) -> SubbandSet:
    """正向变换；H/W 必须为偶数"""
    x = check_grid(x)
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return SubbandSet(
        ll=(a + b + c + d) * scale,
        lh=(a + b - c - d) * scale,
        hl=(a - b + c - d) * scale,
        hh=(a - b - c + d) * scale,
    )


def idwt_haar(s: SubbandSet, scale: float = HAAR_SCALE) -> np.ndarray:
    """逆变换，dwt_haar 的精确逆"""
    ll, lh, hl, hh = (np.asarray(getattr(s, f), dtype=np.float64) for f in SUBBANDS)
    if ll.ndim < 3:
        raise GridShapeError(f"子带至少需要 (C, h, w) 三维，收到 {ll.shape}")
    out = np.empty(ll.shape[:-2] + (2 * ll.shape[-2], 2 * ll.shape[-1]))
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) * scale
    out[..., 0::2, 1::2] = (ll + lh - hl - hh) * scale
    out[..., 1::2, 0::2] = (ll - lh + hl - hh) * scale
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) * scale
    return out
