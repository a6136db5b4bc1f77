import numpy as np
import pytest

from snrlab.core.denoiser import BiasedDenoiser, ExactDenoiser
from snrlab.core.rng import sample_data
from snrlab.core.searcher import (
    CorrectionObjective,
    TwoStageSearcher,
    count_local_minima,
    lambda_grid,
)
from snrlab.models.config import SearchSection
from snrlab.models.correction import CorrectionConfig, CorrectionMode
from snrlab.models.grid import Grid
from snrlab.models.mixture import BiasProfile, GaussianMixture
from snrlab.models.schedule import SigmaMode

from .conftest import make_schedule


class QuadraticObjective:
    """(λ_l - a)² + (λ_h - b)²，可选平底"""

    def __init__(self, a: float, b: float, flat: bool = False):
        self.a, self.b, self.flat = a, b, flat
        self.calls = 0
        self.batches: list[int] = []

    def evaluate(self, lambda_l, lambda_h):
        self.calls += 1
        if self.flat:
            return 1.0, 0.01, 0.0
        return (lambda_l - self.a) ** 2 + (lambda_h - self.b) ** 2, 0.01, 0.0

    def evaluate_many(self, pairs):
        self.batches.append(len(pairs))
        return [self.evaluate(l, h) for l, h in pairs]


def test_lambda_grid():
    g = lambda_grid(0.0, 0.2, 0.05)
    assert g == [0.0, 0.05, 0.1, 0.15, 0.2]
    assert 1.0 in lambda_grid(0.8, 0.95, 0.05, include=1.0)
    with pytest.raises(ValueError):
        lambda_grid(0.0, 1.0, 0.0)


def test_count_local_minima():
    assert count_local_minima([3, 2, 1, 2, 3]) == 1
    assert count_local_minima([1, 2, 1, 2, 1]) == 3
    assert count_local_minima([5]) == 0


def test_two_stage_finds_quadratic_minimum():
    searcher = TwoStageSearcher(QuadraticObjective(0.063, 0.937), SearchSection())
    result = searcher.search()
    assert result.lambda_l == pytest.approx(0.063)
    assert result.lambda_h == pytest.approx(0.937)
    assert result.unimodal == {"low": True, "high": True}
    assert result.trace[0].stage == "baseline"
    assert result.trace[0].lambda_l == 0.0 and result.trace[0].lambda_h == 1.0
    assert result.improvement > 0
    stages = {p.stage for p in result.trace}
    assert stages == {"baseline", "low-coarse", "low-fine", "high-coarse", "high-fine"}


def test_ties_prefer_weaker_correction():
    result = TwoStageSearcher(QuadraticObjective(0, 0, flat=True), SearchSection()).search()
    assert result.lambda_l == 0.0
    assert result.lambda_h == 1.0
    assert result.improvement == 0.0


def test_joint_grid():
    settings = SearchSection(coarse_step=0.05, joint=True)
    result = TwoStageSearcher(QuadraticObjective(0.05, 0.9), settings).search()
    assert result.lambda_l == pytest.approx(0.05)
    assert result.lambda_h == pytest.approx(0.9)
    assert result.unimodal == {"joint": True}
    assert len(result.rows()) == 1 + 5 * 5


def test_objective_cache_and_determinism(gaussian):
    sched = make_schedule(10, SigmaMode.POSTERIOR)
    model = BiasedDenoiser(ExactDenoiser(sched, gaussian), BiasProfile.build(sched.T, 0.98, 0.1))
    ref = sample_data(1234, 40, gaussian)
    obj = CorrectionObjective(model, sched, CorrectionConfig(), ref, 40, seed=2, n_proj=4)
    assert obj.base.mode is CorrectionMode.DCW
    first = obj.evaluate(0.05, 0.95)
    assert obj.evaluate(0.05, 0.95) is first
    other = CorrectionObjective(model, sched, CorrectionConfig(), ref, 40, seed=2, n_proj=4, threads=3)
    assert other.evaluate(0.05, 0.95) == first


def test_grid_points_evaluated_in_parallel_match_serial(gaussian):
    sched = make_schedule(10, SigmaMode.POSTERIOR)
    model = BiasedDenoiser(ExactDenoiser(sched, gaussian), BiasProfile.build(sched.T, 0.98, 0.1))
    ref = sample_data(1234, 40, gaussian)
    pairs = [(0.0, 1.0), (0.05, 0.95), (0.1, 1.0), (0.05, 0.95)]
    serial = CorrectionObjective(model, sched, CorrectionConfig(), ref, 40, seed=2, n_proj=4)
    pooled = CorrectionObjective(model, sched, CorrectionConfig(), ref, 40, seed=2, n_proj=4, threads=3)
    expected = [serial.evaluate(l, h) for l, h in pairs]
    assert pooled.evaluate_many(pairs) == expected
    assert len(pooled._cache) == 3


def test_searcher_submits_whole_grids():
    objective = QuadraticObjective(0.063, 0.937)
    TwoStageSearcher(objective, SearchSection()).search()
    assert objective.batches[0] == 1
    assert max(objective.batches) == len(lambda_grid(0.0, 0.2, 0.01, include=0.0))
    assert sum(objective.batches) == objective.calls


@pytest.mark.slow
def test_search_on_biased_gaussian_improves_over_baseline():
    sched = make_schedule(100, SigmaMode.POSTERIOR)
    data = GaussianMixture.single(Grid.zeros(1, 8, 8), 1.0)
    model = BiasedDenoiser(ExactDenoiser(sched, data), BiasProfile.build(sched.T, 0.98, 0.1))
    ref = sample_data(1234, 2000, data)
    obj = CorrectionObjective(model, sched, CorrectionConfig(mode="DCW"), ref, 2000, seed=7, threads=2, n_proj=16)
    settings = SearchSection(coarse_step=0.02, fine_step=0.01)
    result = TwoStageSearcher(obj, settings).search()
    assert result.improvement >= 3 * max(result.best.stderr, result.baseline.stderr)
    assert 0.0 <= result.lambda_l <= 0.2
    assert 0.8 <= result.lambda_h <= 1.0
    # λ* 可以只凭轨迹复现
    final = [p for p in result.trace if p.lambda_l == result.lambda_l and p.lambda_h == result.lambda_h]
    assert min(p.objective for p in final) == result.best.objective


@pytest.mark.slow
def test_search_with_exact_denoiser_finds_nothing_to_correct():
    sched = make_schedule(50, SigmaMode.POSTERIOR)
    data = GaussianMixture.single(Grid.zeros(1, 4, 4), 1.0)
    ref = sample_data(1234, 1000, data)
    obj = CorrectionObjective(ExactDenoiser(sched, data), sched, CorrectionConfig(), ref, 1000, seed=7, n_proj=8)
    settings = SearchSection(coarse_step=0.05, fine_step=0.01)
    result = TwoStageSearcher(obj, settings).search()
    assert 0.0 <= result.improvement <= result.baseline.stderr
    assert result.best.objective == pytest.approx(result.baseline.objective, abs=result.baseline.stderr)
