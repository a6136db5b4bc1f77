"""数据分布与偏差配置"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid, GridShapeError


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """
    各向同性高斯混合 q(x₀) = Σ w_k N(μ_k, s_k²·I)

    means 形状 (K, C, H, W)。
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64).ravel()
        if mu.ndim != 4 or mu.shape[0] != w.size or var.size != w.size:
            raise GridShapeError(
                f"混合成分数量不一致: weights={w.size}, means={mu.shape}, variances={var.size}"
            )
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"混合权重必须为正且和为 1，收到 {w.tolist()}")
        if np.any(var <= 0):
            raise ValueError(f"成分方差必须为正，收到 {var.tolist()}")
        for arr in (w, mu, var):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @classmethod
    def from_modes(
        cls, modes: list[tuple[float, Grid, float]], normalize: bool = False
    ) -> "GaussianMixture":
        """由 (weight, mean, var) 列表构造"""
        if not modes:
            raise ValueError("至少需要一个混合成分")
        w = np.array([m[0] for m in modes], dtype=np.float64)
        if normalize:
            w = w / w.sum()
        shapes = {m[1].shape for m in modes}
        if len(shapes) != 1:
            raise GridShapeError(f"所有成分均值形状必须一致，收到 {shapes}")
        means = np.stack([m[1].values for m in modes])
        return cls(weights=w, means=means, variances=np.array([m[2] for m in modes]))

    @classmethod
    def single(cls, mean: Grid, var: float) -> "GaussianMixture":
        return cls.from_modes([(1.0, mean, var)])

    @property
    def K(self) -> int:
        return int(self.weights.size)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.means.shape[1:])

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def second_moment_per_dim(self) -> float:
        """E‖x₀‖²/dim 的解析值"""
        mean_sq = np.mean(self.means.reshape(self.K, -1) ** 2, axis=1)
        return float(np.sum(self.weights * (mean_sq + self.variances)))


@dataclass(frozen=True, eq=False)
class BiasProfile:
    """
    重建偏差配置 x⁰_θ = γ_t·x⁰ + φ_t·ε

    gamma/phi 长度为 T+1，下标 0 不使用。
    """

    gamma: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64).ravel()
        p = np.asarray(self.phi, dtype=np.float64).ravel()
        if g.shape != p.shape:
            raise ValueError(f"gamma 与 phi 长度不一致: {g.size} vs {p.size}")
        if np.any(g[1:] <= 0) or np.any(g[1:] > 1):
            raise ValueError("γ_t 必须位于 (0, 1]")
        if np.any(p[1:] < 0) or not np.all(np.isfinite(p)):
            raise ValueError("φ_t 必须为有限非负数")
        for arr in (g, p):
            arr.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "phi", p)

    @classmethod
    def build(
        cls, T: int, gamma: float | np.ndarray, phi: float | np.ndarray
    ) -> "BiasProfile":
        """常数或逐步序列（长度 T）均可，常数广播到 t = 1..T"""
        def expand(v, name):
            arr = np.asarray(v, dtype=np.float64)
            if arr.ndim == 0:
                arr = np.full(T, float(arr))
            if arr.size != T:
                raise ValueError(f"{name} 序列长度必须为 T={T}，收到 {arr.size}")
            return np.concatenate([[1.0 if name == "gamma" else 0.0], arr.ravel()])

        return cls(gamma=expand(gamma, "gamma"), phi=expand(phi, "phi"))

    @classmethod
    def identity(cls, T: int) -> "BiasProfile":
        return cls.build(T, 1.0, 0.0)

    @classmethod
    def from_csv(cls, T: int, gamma: float | str | Path, phi: float | str | Path) -> "BiasProfile":
        """gamma/phi 可以是标量或单列 CSV 路径（逐行 t = 1..T）"""
        def load(v):
            if isinstance(v, (int, float)):
                return float(v)
            return np.loadtxt(Path(v), delimiter=",", ndmin=1)

        return cls.build(T, load(gamma), load(phi))

    @property
    def T(self) -> int:
        return int(self.gamma.size - 1)

    @property
    def bound(self) -> float:
        """一致上界 M = max_t φ_t"""
        return float(np.max(self.phi[1:]))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.gamma[1:] == 1.0) and np.all(self.phi[1:] == 0.0))
