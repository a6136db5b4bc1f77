"""网格数据类型：样本、噪声与预测共用的 C×H×W 实数场"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np


class GridShapeError(ValueError):
    """形状不匹配、奇数边长或非有限值"""


def check_grid(values: np.ndarray) -> np.ndarray:
    """
    校验 (..., C, H, W) 数组

    要求末三维存在、H/W 为偶数、所有元素有限；返回 float64 数组。
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim < 3:
        raise GridShapeError(f"网格至少需要 (C, H, W) 三维，收到形状 {arr.shape}")
    c, h, w = arr.shape[-3:]
    if c < 1 or h < 2 or w < 2:
        raise GridShapeError(f"网格维度必须为正，收到 {arr.shape[-3:]}")
    if h % 2 or w % 2:
        raise GridShapeError(f"H 和 W 必须为偶数（单层 DWT 需要），收到 {h}×{w}")
    if not np.all(np.isfinite(arr)):
        raise GridShapeError("网格包含 NaN 或 Inf")
    return arr


def check_same_shape(x: np.ndarray, y: np.ndarray) -> None:
    if np.shape(x) != np.shape(y):
        raise GridShapeError(f"形状不匹配: {np.shape(x)} vs {np.shape(y)}")


@dataclass(frozen=True, eq=False)
class Grid:
    """单个 C×H×W 网格（值语义，构造后只读）"""

    values: np.ndarray

    def __post_init__(self):
        arr = check_grid(self.values)
        if arr.ndim != 3:
            raise GridShapeError(f"Grid 必须恰为三维，收到形状 {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "Grid":
        return cls(np.zeros((channels, height, width)))

    @classmethod
    def constant(cls, value: float, channels: int, height: int, width: int) -> "Grid":
        return cls(np.full((channels, height, width), float(value)))

    @classmethod
    def checker(
        cls, amplitude: float, channels: int, height: int, width: int
    ) -> "Grid":
        """±amplitude 棋盘格，左上角为 +amplitude"""
        ii, jj = np.indices((height, width))
        pattern = np.where((ii + jj) % 2 == 0, 1.0, -1.0) * amplitude
        return cls(np.broadcast_to(pattern, (channels, height, width)))

    def to_csv(self, path: str | Path) -> None:
        """首行 c,h,w，随后是行优先展开的值"""
        c, h, w = self.shape
        lines = [f"{c},{h},{w}"]
        lines.extend(repr(float(v)) for v in self.values.ravel())
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "Grid":
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines:
            raise GridShapeError(f"网格 CSV 为空: {path}")
        try:
            c, h, w = (int(v) for v in lines[0].split(","))
            values = np.array([float(v) for v in lines[1:]], dtype=np.float64)
        except ValueError as e:
            raise GridShapeError(f"无法解析网格 CSV {path}: {e}") from e
        if values.size != c * h * w:
            raise GridShapeError(
                f"网格 CSV {path} 头部声明 {c}×{h}×{w}，实际有 {values.size} 个值"
            )
        return cls(values.reshape(c, h, w))


def axpy(a: float, x: np.ndarray, b: float, y: np.ndarray) -> np.ndarray:
    """逐元素 a·x + b·y"""
    check_same_shape(x, y)
    return a * np.asarray(x) + b * np.asarray(y)


def sq_norm_per_dim(x: np.ndarray) -> np.ndarray:
    """(..., C, H, W) → 每个样本的 ‖x‖²/dim"""
    x = np.asarray(x)
    flat = x.reshape(x.shape[:-3] + (-1,))
    return np.mean(flat * flat, axis=-1)


@dataclass(frozen=True, eq=False)
class MomentStats:
    """
    样本矩统计

    mean_sq_norm 为 E‖x‖²/dim；m2 为其离差平方和，用于标准误。
    """

    count: int
    mean: np.ndarray
    mean_sq_norm: float
    m2: float = 0.0

    @property
    def variance(self) -> float:
        """‖x‖²/dim 的无偏样本方差"""
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> float:
        """mean_sq_norm 的蒙特卡洛标准误"""
        if self.count < 2:
            return 0.0
        return float(np.sqrt(self.variance / self.count))

    @classmethod
    def from_batch(cls, batch: np.ndarray) -> "MomentStats":
        """一批 (N, C, H, W) 样本（或单个网格）的两遍法统计"""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 3:
            batch = batch[None]
        n = batch.shape[0]
        if n < 1:
            raise ValueError("样本批为空")
        q = sq_norm_per_dim(batch)
        q_mean = float(np.mean(q))
        return cls(
            count=n,
            mean=np.mean(batch, axis=0),
            mean_sq_norm=q_mean,
            m2=float(np.sum((q - q_mean) ** 2)),
        )

    def merge(self, other: "MomentStats") -> "MomentStats":
        """Chan 并行合并公式；满足结合律"""
        n = self.count + other.count
        delta = other.mean_sq_norm - self.mean_sq_norm
        w = other.count / n
        return MomentStats(
            count=n,
            mean=self.mean + (other.mean - self.mean) * w,
            mean_sq_norm=self.mean_sq_norm + delta * w,
            m2=self.m2 + other.m2 + delta * delta * self.count * w,
        )


def accumulate_moments(samples: Iterable[np.ndarray]) -> MomentStats:
    """
    流式累积矩统计

    每个元素可以是单个网格或一批网格；批内两遍法，批间 Chan 合并。
    """
    stats: MomentStats | None = None
    shape = None
    for item in samples:
        item = np.asarray(item, dtype=np.float64)
        if shape is None:
            shape = item.shape[-3:]
        elif item.shape[-3:] != shape:
            raise GridShapeError(f"流中样本形状不一致: {shape} vs {item.shape[-3:]}")
        part = MomentStats.from_batch(item)
        stats = part if stats is None else stats.merge(part)
    if stats is None:
        raise ValueError("样本流为空，无法累积矩统计")
    return stats
