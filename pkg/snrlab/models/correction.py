"""差分校正配置"""

from dataclasses import dataclass, replace
from enum import Enum


class CorrectionMode(str, Enum):
    NONE = "none"
    DC = "DC"
    DH = "DH"
    DL = "DL"
    DCW = "DCW"


class WeightKind(str, Enum):
    VARIANCE = "variance"
    PIECEWISE = "piecewise"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Weights:
    """某一时间步的低频/高频校正系数"""

    low: float
    high: float


@dataclass(frozen=True)
class CorrectionConfig:
    """
    校正模式、权重调度与全部 λ/阈值参数

    - variance: λ_t^l = lambda_l·σ_t，λ_t^h = (1 - lambda_h)·σ_t
    - piecewise: low = w_l·𝟙{t ≥ t_s}，high = w_h·𝟙{t < t_s}
    - constant: low = w_l，high = w_h
    """

    mode: CorrectionMode = CorrectionMode.NONE
    weight_kind: WeightKind = WeightKind.VARIANCE
    lambda_l: float = 0.0
    lambda_h: float = 1.0
    t_s: int = 0
    w_l: float = 0.0
    w_h: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", CorrectionMode(self.mode))
        object.__setattr__(self, "weight_kind", WeightKind(self.weight_kind))
        if self.lambda_l < 0:
            raise ValueError(f"lambda_l 必须非负，收到 {self.lambda_l}")
        if not 0 <= self.lambda_h <= 1:
            raise ValueError(f"lambda_h 必须位于 [0, 1]，收到 {self.lambda_h}")
        if self.t_s < 0:
            raise ValueError(f"t_s 必须非负，收到 {self.t_s}")
        if self.w_l < 0 or self.w_h < 0:
            raise ValueError(f"w_l/w_h 必须非负，收到 ({self.w_l}, {self.w_h})")

    @property
    def enabled(self) -> bool:
        return self.mode is not CorrectionMode.NONE

    def with_lambdas(self, lambda_l: float | None = None, lambda_h: float | None = None) -> "CorrectionConfig":
        """返回替换了 λ 的新配置（搜索用）"""
        return replace(
            self,
            lambda_l=self.lambda_l if lambda_l is None else lambda_l,
            lambda_h=self.lambda_h if lambda_h is None else lambda_h,
        )
