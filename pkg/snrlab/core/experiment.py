"""
实验编排

run_experiment 按 experiment.name 分派，所有结果写入
<output.root>/<配置文件名>/，并附 report.json 与 manifest.json。
CSV 只依赖 (配置, 种子)；耗时只进入 report.json。
"""

import hashlib
import json
import logging
import time
from dataclasses import replace
from pathlib import Path
from typing import Iterable

import numpy as np

from ..models.config import LabConfig, load_config, thread_count
from ..models.correction import CorrectionMode
from ..models.report import ExperimentReport
from .denoiser import BiasedDenoiser, Denoiser, ExactDenoiser
from .diagnostics import estimate_gamma_psi, forward_vs_reverse, reconstruction_norms, sliding_window
from .metrics import EnergyDistance, sliced_wasserstein
from .rng import sample_data
from .sampler import run_reverse
from .searcher import CorrectionObjective, SearchResult, TwoStageSearcher
from .theory import compound_curves, theory_curves

logger = logging.getLogger(__name__)

SCHEDULE_HEADER = "t,beta,alpha_bar,beta_tilde,sigma,snr"
# 逐时间步 reverse ≥ forward 的比例达到该值才算反向曲线占优
DOMINANCE_THRESHOLD = 0.95

ABLATION_VARIANTS = (
    CorrectionMode.NONE,
    CorrectionMode.DC,
    CorrectionMode.DH,
    CorrectionMode.DL,
    CorrectionMode.DCW,
)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def format_csv(header: str, rows: Iterable[Iterable] | np.ndarray) -> str:
    """固定表头、逐值 %.17g 格式的 CSV 文本"""
    if isinstance(rows, np.ndarray):
        rows = rows.tolist()
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path: Path, header: str, rows: Iterable[Iterable] | np.ndarray) -> Path:
    path.write_text(format_csv(header, rows))
    return path


def build_model(config: LabConfig) -> Denoiser:
    """exact 或在其外包一层 biased"""
    sched = config.build_schedule()
    model: Denoiser = ExactDenoiser(sched, config.build_mixture())
    if config.denoiser.kind == "biased":
        model = BiasedDenoiser(model, config.build_bias())
    return model


def _resolve_config(config: LabConfig | str | Path) -> LabConfig:
    return config if isinstance(config, LabConfig) else load_config(config)


def _new_report(config: LabConfig, experiment: str) -> ExperimentReport:
    report = ExperimentReport(
        experiment=experiment,
        config=config.snapshot(),
        config_hash=config.config_hash,
        output_dir=str(config.output_dir),
    )
    report.seeds["run"] = config.run.seed
    logger.debug("配置哈希 %s", config.config_hash)
    return report


def _finish(report: ExperimentReport, out: Path, started: float) -> ExperimentReport:
    """写 manifest.json（只含确定性内容）与 report.json"""
    files = {}
    for key, p in sorted(report.csv_paths.items()):
        data = Path(p).read_bytes()
        files[Path(p).name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "experiment": report.experiment,
        "config_hash": report.config_hash,
        "files": files,
        "seeds": report.seeds,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    report.wall_clock = time.perf_counter() - started
    report.write_json(out / "report.json")
    logger.info("实验 %s 完成，输出目录 %s（%.1fs）", report.experiment, out, report.wall_clock)
    return report


# ---------------------------------------------------------------------------
# 各实验
# ---------------------------------------------------------------------------


def _exp_sample(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    model = build_model(config)
    r = config.run
    traj = run_reverse(
        model,
        model.sched,
        config.correction,
        r.n_chains,
        r.seed,
        record=r.record,
        threads=threads,
        sampler=r.sampler,
        ddim_steps=r.ddim_steps,
    )
    report.add_csv("trajectories", write_csv(out / "trajectories.csv", "chain_id,t,mean_sq_norm", traj.norm_rows()))
    for name, arr in (("states", traj.states), ("x0_hat", traj.x0_hats), ("eps_hat", traj.eps_hats)):
        if arr is not None:
            np.save(out / f"{name}.npy", arr)
    final = traj.state_stats[0]
    report.add_metric("final_mean_sq_norm", final.mean_sq_norm, final.stderr, r.seed)


def _exp_sliding_window(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    model = build_model(config)
    dg = config.diagnostics
    s_list = dg.s_list or [config.t_probe]
    t_list = dg.t_list or list(range(1, config.schedule.T + 1))
    res = sliding_window(model, model.sched, config.build_mixture(), s_list, t_list, dg.n, config.run.seed, threads)
    report.add_csv("sliding_window", write_csv(out / "sliding_window.csv", res.HEADER, res.table()))


def _exp_forward_vs_reverse(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    model = build_model(config)
    dg = config.diagnostics
    seeds = dg.seeds or [config.run.seed]
    sizes = dg.batch_sizes or [dg.n]
    single = len(seeds) == 1 and len(sizes) == 1
    dominance_rows = []
    for seed in seeds:
        for n in sizes:
            curves = forward_vs_reverse(
                model, model.sched, config.build_mixture(), config.correction, n, seed, threads
            )
            name = "norms.csv" if single else f"norms_seed{seed}_n{n}.csv"
            report.add_csv(name[:-4], write_csv(out / name, curves.HEADER, curves.table()))
            frac = curves.dominance()
            dominance_rows.append((seed, n, frac))
            report.add_metric(f"dominance_seed{seed}_n{n}", frac, None, seed)
            report.seeds[f"seed{seed}_n{n}"] = seed
    report.add_csv(
        "dominance",
        write_csv(out / "dominance.csv", "seed,n,fraction_reverse_ge_forward", dominance_rows),
    )
    fractions = [frac for _, _, frac in dominance_rows]
    # 多数时间步上哪条曲线更高；各 (seed, n) 一致时记为 True
    report.notes["dominance_ordering_agrees"] = len({frac >= 0.5 for frac in fractions}) == 1
    report.notes["reverse_dominates"] = min(fractions) >= DOMINANCE_THRESHOLD
    logger.info(
        "reverse ≥ forward 比例 %.3f..%.3f，排序一致: %s",
        min(fractions),
        max(fractions),
        report.notes["dominance_ordering_agrees"],
    )


def _exp_recon_norms(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    model = build_model(config)
    dg = config.diagnostics
    curves = reconstruction_norms(
        model, model.sched, config.build_mixture(), dg.n, config.run.seed, threads, config.correction
    )
    report.add_csv("recon_norms", write_csv(out / "recon_norms.csv", curves.HEADER, curves.table()))
    report.add_metric("data_mean_sq_norm", curves.data, curves.stderr_d, config.run.seed)


def _exp_theory_curves(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    sched = config.build_schedule()
    profile = config.build_bias()
    curves = theory_curves(profile, sched)
    report.add_csv("theory_curves", write_csv(out / "theory_curves.csv", curves.HEADER, curves.table()))
    compound = compound_curves(profile, sched)
    report.add_csv("theory_compound", write_csv(out / "theory_compound.csv", compound.HEADER, compound.table()))
    report.add_metric("max_snr_ratio", float(np.max(curves.snr_reverse / curves.snr_forward)) if curves.t.size else 1.0)


def _exp_metrics(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    model = build_model(config)
    r, m = config.run, config.metrics
    data = config.build_mixture()
    traj = run_reverse(
        model, model.sched, config.correction, r.n_chains, r.seed,
        threads=threads, sampler=r.sampler, ddim_steps=r.ddim_steps,
    )
    reference = sample_data(m.seed, config.n_data, data)
    fresh = sample_data(m.seed + 1, r.n_chains, data)
    energy = EnergyDistance(reference)
    rows = []
    for label, samples, seed in (("", traj.final, r.seed), ("_data", fresh, m.seed + 1)):
        ed, se = energy(samples)
        sw = sliced_wasserstein(samples, reference, m.n_proj, m.seed)
        n_a = samples.shape[0]
        rows += [
            (f"energy_distance{label}", ed, n_a, config.n_data, seed),
            (f"energy_distance_stderr{label}", se, n_a, config.n_data, seed),
            (f"sliced_wasserstein{label}", sw, n_a, config.n_data, seed),
        ]
        report.add_metric(f"energy_distance{label}", ed, se, seed)
        report.add_metric(f"sliced_wasserstein{label}", sw, None, seed)
    report.seeds["data"] = m.seed
    report.add_csv("metrics", write_csv(out / "metrics.csv", "metric_name,value,n_a,n_b,seed", rows))


def default_gamma_psi_steps(T: int) -> list[int]:
    return sorted({max(1, T // 4), max(1, T // 2), max(1, 3 * T // 4)})


def _exp_gamma_psi(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    sched = config.build_schedule()
    data = config.build_mixture()
    profile = config.build_bias()
    ts = config.diagnostics.t_list or default_gamma_psi_steps(sched.T)
    header = None
    rows = []
    for t in ts:
        est = estimate_gamma_psi(sched, data, profile, t, config.diagnostics.n, config.run.seed, threads)
        header = est.HEADER
        rows.append(est.row())
        report.add_metric(f"gamma_hat_t{t}", est.gamma_hat, est.gamma_hat_stderr, config.run.seed)
        report.add_metric(f"noise_std_t{t}", est.noise_std, est.noise_std_stderr, config.run.seed)
    report.add_csv("gamma_psi", write_csv(out / "gamma_psi.csv", header, rows))


def _exp_ablation(config: LabConfig, report: ExperimentReport, out: Path, threads: int) -> None:
    model = build_model(config)
    r, m = config.run, config.metrics
    reference = sample_data(m.seed, config.n_data, config.build_mixture())
    energy = EnergyDistance(reference)
    rows = []
    for variant in ABLATION_VARIANTS:
        corr = replace(config.correction, mode=variant)
        traj = run_reverse(
            model, model.sched, corr, r.n_chains, r.seed,
            threads=threads, sampler=r.sampler, ddim_steps=r.ddim_steps,
        )
        ed, se = energy(traj.final)
        sw = sliced_wasserstein(traj.final, reference, m.n_proj, m.seed)
        rows.append((variant.value, ed, se, sw))
        report.add_metric(f"energy_distance_{variant.value}", ed, se, r.seed)
    report.seeds["data"] = m.seed
    report.add_csv(
        "ablation",
        write_csv(out / "ablation.csv", "variant,energy_distance,stderr,sliced_wasserstein", rows),
    )


EXPERIMENT_RUNNERS = {
    "sample": _exp_sample,
    "sliding-window": _exp_sliding_window,
    "forward-vs-reverse": _exp_forward_vs_reverse,
    "recon-norms": _exp_recon_norms,
    "theory-curves": _exp_theory_curves,
    "metrics": _exp_metrics,
    "gamma-psi": _exp_gamma_psi,
    "ablation": _exp_ablation,
}


def run_experiment(
    config: LabConfig | str | Path,
    threads: int | None = None,
    experiment: str | None = None,
) -> ExperimentReport:
    """
    执行配置中指定的实验（或以 experiment 覆盖）

    配置错误在创建输出目录之前抛出。
    """
    config = _resolve_config(config)
    name = experiment or config.experiment.name
    if name not in EXPERIMENT_RUNNERS:
        raise ValueError(f"未知实验: {name}")
    threads = threads or thread_count()
    started = time.perf_counter()
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    logger.info("开始实验 %s（配置 %s，%d 线程）", name, config.name, threads)
    report = _new_report(config, name)
    EXPERIMENT_RUNNERS[name](config, report, out, threads)
    return _finish(report, out, started)


def build_searcher(config: LabConfig, threads: int) -> TwoStageSearcher:
    """搜索所需的模型、数据参考集与目标函数"""
    model = build_model(config)
    reference = sample_data(config.metrics.seed, config.n_data, config.build_mixture())
    objective = CorrectionObjective(
        model,
        model.sched,
        config.correction,
        reference,
        config.run.n_chains,
        config.run.seed,
        threads=threads,
        n_proj=config.metrics.n_proj,
        proj_seed=config.metrics.seed,
    )
    return TwoStageSearcher(objective, config.search)


def two_stage_search(
    config: LabConfig | str | Path, threads: int | None = None
) -> tuple[SearchResult, ExperimentReport]:
    """先搜 λ_l 再搜 λ_h；写出 search_trace.csv"""
    config = _resolve_config(config)
    threads = threads or thread_count()
    started = time.perf_counter()
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    report = _new_report(config, "search")
    report.seeds["data"] = config.metrics.seed

    result = build_searcher(config, threads).search()
    report.add_csv("search_trace", write_csv(out / "search_trace.csv", result.HEADER, result.rows()))
    report.add_metric("lambda_l_star", result.lambda_l)
    report.add_metric("lambda_h_star", result.lambda_h)
    report.add_metric("objective_baseline", result.baseline.objective, result.baseline.stderr, config.run.seed)
    report.add_metric("objective_best", result.best.objective, result.best.stderr, config.run.seed)
    report.notes["unimodal"] = result.unimodal
    return result, _finish(report, out, started)
