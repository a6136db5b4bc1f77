"""
不变量自检

每项检查只用固定种子的小规模输入，结果确定。haar_scale 参数用于负对照：
传入非 0.5 的值时小波检查必然失败并给出具体名称。
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..models.correction import CorrectionConfig, CorrectionMode, Weights
from ..models.grid import Grid
from ..models.mixture import BiasProfile, GaussianMixture
from ..models.schedule import SigmaMode, build_linear, scaled_linear_bounds
from .correction import apply_variant, dc_pixel, dcw_apply
from .denoiser import ExactDenoiser, x0_to_eps
from .sampler import ancestral_step, posterior_step, run_reverse
from .theory import eta, theory_curves
from .wavelet import HAAR_SCALE, dwt_haar, idwt_haar

logger = logging.getLogger(__name__)

SELFTEST_SEED = 20240601
TOLERANCE = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _check(name: str, value: float, tolerance: float = TOLERANCE, detail: str = "") -> CheckResult:
    passed = bool(np.isfinite(value) and value <= tolerance)
    if not passed:
        logger.warning("自检 %s 失败: %.3g > %.3g", name, value, tolerance)
    return CheckResult(name, passed, float(value), tolerance, detail)


def _wavelet_checks(rng: np.random.Generator, haar_scale: float) -> list[CheckResult]:
    x = rng.standard_normal((4, 3, 8, 8))
    s = dwt_haar(x, scale=haar_scale)
    residual = float(np.max(np.abs(idwt_haar(s, scale=haar_scale) - x)))
    ratio = s.energy() / np.sum(x**2, axis=(1, 2, 3))
    return [
        _check("wavelet_round_trip", residual, detail=f"max |iDWT(DWT(x)) - x| = {residual:.3g}"),
        _check(
            "wavelet_energy",
            float(np.max(np.abs(ratio - 1.0))),
            detail=f"能量比 {float(np.min(ratio)):.6f}..{float(np.max(ratio)):.6f}",
        ),
    ]


def _step_form_check(rng: np.random.Generator) -> CheckResult:
    """ε 形式祖先步与 x₀ 形式后验步在相同 σ、z 下逐元素一致"""
    sched = build_linear(50, *scaled_linear_bounds(50), sigma_mode=SigmaMode.SMALL)
    worst = 0.0
    for t in (sched.T, sched.T // 2, 2, 1):
        x = rng.standard_normal((5, 1, 4, 4))
        x0_hat = rng.standard_normal((5, 1, 4, 4))
        z = rng.standard_normal((5, 1, 4, 4))
        eps_hat = x0_to_eps(x, x0_hat, t, sched)
        sigma = math.sqrt(sched.beta_tilde[t])
        a = ancestral_step(x, eps_hat, z, t, sched, sigma)
        b = posterior_step(x, x0_hat, z, t, sched, sigma)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return _check("step_form_equivalence", worst, 1e-9)


def _zero_lambda_checks(rng: np.random.Generator) -> list[CheckResult]:
    x = rng.standard_normal((3, 2, 8, 8))
    x0 = rng.standard_normal((3, 2, 8, 8))
    zero = Weights(low=0.0, high=0.0)
    mismatched = [
        m.value for m in CorrectionMode if not np.array_equal(apply_variant(m, x, x0, zero), x)
    ]
    results = [
        _check(
            "zero_lambda_variants",
            float(len(mismatched)),
            0.0,
            detail="不一致的变体: " + ",".join(mismatched) if mismatched else "",
        )
    ]

    # 整条链：λ_l = 0、λ_h = 1 的 DCW 与不校正逐位相同
    sched = build_linear(20, *scaled_linear_bounds(20), sigma_mode=SigmaMode.SMALL)
    model = ExactDenoiser(sched, GaussianMixture.single(Grid.checker(0.5, 1, 4, 4), 0.25))
    plain = run_reverse(model, sched, CorrectionConfig(), 16, SELFTEST_SEED)
    neutral = run_reverse(
        model, sched, CorrectionConfig(mode=CorrectionMode.DCW, lambda_l=0.0, lambda_h=1.0), 16, SELFTEST_SEED
    )
    diff = float(np.max(np.abs(plain.final - neutral.final)))
    results.append(_check("zero_lambda_chain", diff, 0.0))
    return results


def _dcw_equals_dc_check(rng: np.random.Generator) -> CheckResult:
    """四个子带系数相同时小波校正退化为像素校正"""
    x = rng.standard_normal((3, 2, 8, 8))
    x0 = rng.standard_normal((3, 2, 8, 8))
    worst = 0.0
    for lam in (0.05, 0.3, 1.7):
        a = dcw_apply(x, x0, {"ll": lam, "lh": lam, "hl": lam, "hh": lam})
        worst = max(worst, float(np.max(np.abs(a - dc_pixel(x, x0, lam)))))
    return _check("dcw_equals_dc", worst)


def _theorem_degeneracy_check() -> CheckResult:
    """γ = 1、φ = 0 时理论反向 SNR 等于前向 SNR，η 为 0"""
    sched = build_linear(100, *scaled_linear_bounds(100))
    curves = theory_curves(BiasProfile.identity(sched.T), sched)
    rel = float(np.max(np.abs(curves.snr_reverse / curves.snr_forward - 1.0)))
    rel = max(rel, float(np.max(curves.eta)), eta(0.0, 0.0))
    return _check("theorem_degeneracy", rel, 1e-12)


def run_selftest(haar_scale: float = HAAR_SCALE) -> list[CheckResult]:
    """运行全部检查，返回逐项结果"""
    rng = np.random.default_rng(SELFTEST_SEED)
    results = _wavelet_checks(rng, haar_scale)
    results.append(_step_form_check(rng))
    results.extend(_zero_lambda_checks(rng))
    results.append(_dcw_equals_dc_check(rng))
    results.append(_theorem_degeneracy_check())
    logger.info("自检完成: %d/%d 通过", sum(r.passed for r in results), len(results))
    return results
