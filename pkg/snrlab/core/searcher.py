"""两阶段 λ 搜索：先 λ_l 后 λ_h，每阶段粗网格定位拐点后细网格精化"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..models.config import SearchSection
from ..models.correction import CorrectionConfig, CorrectionMode, WeightKind
from ..models.schedule import NoiseSchedule
from .denoiser import Denoiser
from .metrics import EnergyDistance, sliced_wasserstein
from .sampler import run_reverse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TracePoint:
    stage: str
    lambda_l: float
    lambda_h: float
    objective: float
    stderr: float
    sliced_wasserstein: float


@dataclass
class SearchResult:
    """搜索结果；λ* 可以只凭 trace 复现"""

    lambda_l: float
    lambda_h: float
    baseline: TracePoint
    best: TracePoint
    trace: list[TracePoint] = field(default_factory=list)
    unimodal: dict[str, bool] = field(default_factory=dict)

    HEADER = "stage,lambda_l,lambda_h,objective,stderr,sliced_wasserstein"

    @property
    def improvement(self) -> float:
        return self.baseline.objective - self.best.objective

    def rows(self) -> list[tuple]:
        return [
            (p.stage, p.lambda_l, p.lambda_h, p.objective, p.stderr, p.sliced_wasserstein)
            for p in self.trace
        ]


def lambda_grid(lo: float, hi: float, step: float, include: float | None = None) -> list[float]:
    """[lo, hi] 上步长为 step 的网格（四舍五入到 10 位），可额外包含一个点"""
    if step <= 0:
        raise ValueError(f"步长必须为正，收到 {step}")
    n = int(round((hi - lo) / step))
    pts = {round(lo + k * step, 10) for k in range(n + 1) if lo + k * step <= hi + 1e-12}
    if include is not None:
        pts.add(round(include, 10))
    return sorted(pts)


def count_local_minima(values: list[float]) -> int:
    v = np.asarray(values)
    if v.size < 3:
        return 0 if v.size < 2 else 1
    inner = (v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:])
    return int(inner.sum() + (v[0] < v[1]) + (v[-1] < v[-2]))


class CorrectionObjective:
    """
    搜索目标：校正后终端样本与数据样本的能量距离

    所有网格点用同一个评估种子（公共随机数）和同一组数据样本。
    """

    def __init__(
        self,
        model: Denoiser,
        sched: NoiseSchedule,
        base: CorrectionConfig,
        reference: np.ndarray,
        n_chains: int,
        seed: int,
        threads: int = 1,
        n_proj: int = 64,
        proj_seed: int = 0,
    ):
        mode = base.mode if base.enabled else CorrectionMode.DCW
        self.base = CorrectionConfig(mode=mode, weight_kind=WeightKind.VARIANCE)
        self.model = model
        self.sched = sched
        self.reference = reference
        self.energy = EnergyDistance(reference)
        self.n_chains = n_chains
        self.seed = seed
        self.threads = threads
        self.n_proj = n_proj
        self.proj_seed = proj_seed
        self._cache: dict[tuple[float, float], tuple[float, float, float]] = {}

    def _compute(self, key: tuple[float, float], threads: int) -> tuple[float, float, float]:
        corr = self.base.with_lambdas(lambda_l=key[0], lambda_h=key[1])
        traj = run_reverse(self.model, self.sched, corr, self.n_chains, self.seed, threads=threads)
        value, stderr = self.energy(traj.final)
        sw = sliced_wasserstein(traj.final, self.reference, self.n_proj, self.proj_seed)
        logger.debug("λ_l=%.4f λ_h=%.4f → ED=%.6g ± %.2g, SW=%.6g", *key, value, stderr, sw)
        return value, stderr, sw

    def evaluate(self, lambda_l: float, lambda_h: float) -> tuple[float, float, float]:
        """返回 (能量距离, 标准误, 切片 Wasserstein)"""
        return self.evaluate_many([(lambda_l, lambda_h)])[0]

    def evaluate_many(self, pairs: list[tuple[float, float]]) -> list[tuple[float, float, float]]:
        """
        批量评估网格点，结果按输入顺序返回

        未缓存的点在线程池中并行，每点各自采样；公共种子使结果与逐点评估一致。
        """
        keys = [(round(l, 10), round(h, 10)) for l, h in pairs]
        todo = list(dict.fromkeys(k for k in keys if k not in self._cache))
        if len(todo) <= 1 or self.threads <= 1:
            results = [self._compute(k, self.threads) for k in todo]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(lambda k: self._compute(k, 1), todo))
        self._cache.update(zip(todo, results))
        return [self._cache[k] for k in keys]


class TwoStageSearcher:
    """两阶段（或联合）网格搜索"""

    def __init__(self, objective: CorrectionObjective, settings: SearchSection):
        self.objective = objective
        self.settings = settings
        self.trace: list[TracePoint] = []

    def _points(self, stage: str, pairs: list[tuple[float, float]]) -> list[TracePoint]:
        values = self.objective.evaluate_many(pairs)
        points = [TracePoint(stage, l, h, *v) for (l, h), v in zip(pairs, values)]
        self.trace.extend(points)
        return points

    @staticmethod
    def _best(points: list[TracePoint]) -> TracePoint:
        # 同分时取校正强度更弱者：λ_l 更小、λ_h 更接近 1
        return min(points, key=lambda p: (p.objective, p.lambda_l, abs(1.0 - p.lambda_h)))

    def _stage(
        self, name: str, lo: float, hi: float, neutral: float, fixed: dict[str, float]
    ) -> tuple[float, bool]:
        s = self.settings
        axis = "lambda_l" if name == "low" else "lambda_h"

        def sweep(label: str, grid: list[float]) -> list[TracePoint]:
            pairs = [(v, fixed["lambda_h"]) if axis == "lambda_l" else (fixed["lambda_l"], v) for v in grid]
            return self._points(f"{name}-{label}", pairs)

        coarse = sweep("coarse", lambda_grid(lo, hi, s.coarse_step, include=neutral))
        unimodal = count_local_minima([p.objective for p in coarse]) <= 1
        if not unimodal:
            logger.warning("%s 阶段粗网格目标函数不是单峰", name)
        center = getattr(self._best(coarse), axis)
        fine_lo = max(lo, center - s.coarse_step)
        fine_hi = min(hi, center + s.coarse_step)
        fine = sweep("fine", lambda_grid(fine_lo, fine_hi, s.fine_step))
        best = self._best(coarse + fine)
        logger.info("%s 阶段最优 %s = %.4f，目标 %.6g", name, axis, getattr(best, axis), best.objective)
        return getattr(best, axis), unimodal

    def search(self) -> SearchResult:
        s = self.settings
        baseline = self._points("baseline", [(0.0, 1.0)])[0]
        if s.joint:
            grid_l = lambda_grid(s.lambda_l_min, s.lambda_l_max, s.coarse_step, include=0.0)
            grid_h = lambda_grid(s.lambda_h_min, s.lambda_h_max, s.coarse_step, include=1.0)
            points = self._points("joint", [(l, h) for l in grid_l for h in grid_h])
            best = self._best(points + [baseline])
            return SearchResult(best.lambda_l, best.lambda_h, baseline, best, self.trace, {"joint": True})

        lam_l, uni_l = self._stage("low", s.lambda_l_min, s.lambda_l_max, 0.0, {"lambda_h": 1.0})
        lam_h, uni_h = self._stage("high", s.lambda_h_min, s.lambda_h_max, 1.0, {"lambda_l": lam_l})
        best = self._best([p for p in self.trace if p.lambda_l == lam_l and p.lambda_h == lam_h])
        return SearchResult(best.lambda_l, best.lambda_h, baseline, best, self.trace, {"low": uni_l, "high": uni_h})
