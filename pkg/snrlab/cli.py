"""snrlab CLI：扩散采样 SNR 诊断与小波差分校正实验"""

import logging
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

app = typer.Typer(name="snrlab", help="扩散模型反向采样 SNR 诊断与差分校正实验工具")
console = Console()

# 默认输出根目录（status 命令使用）
DEFAULT_OUTPUT_ROOT = Path("runs")
LEDGER_NAME = "ledger.duckdb"


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="输出 DEBUG 日志"),
):
    """配置日志"""
    logger = logging.getLogger("snrlab")
    logger.handlers.clear()
    logger.addHandler(RichHandler(console=console, show_path=False))
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


def _fail(e: Exception) -> None:
    """配置或参数错误：红色提示，退出码 2"""
    from rich.markup import escape

    from .models.config import ConfigError

    label = "配置错误" if isinstance(e, ConfigError) else "参数错误"
    console.print(f"[red]{label}:[/red] {escape(str(e))}")
    raise typer.Exit(code=2)


def _ledger_path(config) -> Path:
    return config.output_dir.parent / LEDGER_NAME


def _record(config, command: str, report, threads: int, trace_rows=None) -> None:
    from .core.database import RunLedger

    ledger = RunLedger(_ledger_path(config))
    try:
        run_id = ledger.record(command, report, threads, trace_rows)
    finally:
        ledger.close()
    console.print(f"  台账记录: {run_id}")


def _print_report(report) -> None:
    console.print(f"\n[bold green]{report.experiment} 完成![/bold green]")
    console.print(f"  输出目录: {report.output_dir}")
    console.print(f"  配置哈希: {report.config_hash[:16]}")
    console.print(f"  耗时: {report.wall_clock:.1f}s")
    if not report.metrics:
        return
    table = Table(title="指标")
    table.add_column("名称", style="cyan", no_wrap=True)
    table.add_column("值", justify="right")
    table.add_column("标准误", justify="right")
    for m in report.metrics:
        table.add_row(m.name, f"{m.value:.6g}", "-" if m.stderr is None else f"{m.stderr:.3g}")
    console.print(table)


@app.command()
def run(
    config_path: Path = typer.Argument(..., help="TOML 配置文件"),
    experiment: Optional[str] = typer.Option(None, "--experiment", "-e", help="覆盖配置中的实验名"),
):
    """
    运行配置中的实验

    示例:
      snrlab run configs/sample.toml
      snrlab run configs/forward_vs_reverse.toml -e recon-norms
    """
    from .core.experiment import run_experiment
    from .models.config import load_config, thread_count

    try:
        config = load_config(config_path)
        threads = thread_count()
        with console.status(f"[bold green]运行 {experiment or config.experiment.name}..."):
            report = run_experiment(config, threads, experiment)
    except ValueError as e:
        _fail(e)

    _print_report(report)
    _record(config, "run", report, threads)


@app.command()
def search(
    config_path: Path = typer.Argument(..., help="TOML 配置文件"),
):
    """
    两阶段搜索 λ_l 与 λ_h

    示例:
      snrlab search configs/search.toml
    """
    from .core.experiment import two_stage_search
    from .models.config import load_config, thread_count

    try:
        config = load_config(config_path)
        threads = thread_count()
        with console.status("[bold green]搜索中..."):
            result, report = two_stage_search(config, threads)
    except ValueError as e:
        _fail(e)

    _print_report(report)
    console.print(f"  λ_l* = {result.lambda_l:.4f}, λ_h* = {result.lambda_h:.4f}")
    console.print(
        f"  目标: {result.baseline.objective:.6g} → {result.best.objective:.6g}"
        f"（±{result.best.stderr:.2g}）"
    )
    if not all(result.unimodal.values()):
        console.print("[yellow]粗网格目标函数不是单峰，结果仅供参考[/yellow]")
    _record(config, "search", report, threads, result.rows())


@app.command()
def theory(
    config_path: Path = typer.Argument(..., help="TOML 配置文件"),
):
    """
    计算理论曲线（theory_curves.csv 与 theory_compound.csv）
    """
    from .core.experiment import run_experiment
    from .models.config import load_config

    try:
        config = load_config(config_path)
        report = run_experiment(config, 1, "theory-curves")
    except ValueError as e:
        _fail(e)

    _print_report(report)
    _record(config, "theory", report, 1)


@app.command()
def selftest(
    perturb_haar: Optional[float] = typer.Option(
        None, "--perturb-haar", help="以给定值替换 Haar 归一化常数（负对照）"
    ),
):
    """
    运行不变量自检；任一项失败时退出码为 1
    """
    from .core.selftest import run_selftest
    from .core.wavelet import HAAR_SCALE

    results = run_selftest(HAAR_SCALE if perturb_haar is None else perturb_haar)

    table = Table(title="自检")
    table.add_column("检查", style="cyan", no_wrap=True)
    table.add_column("结果")
    table.add_column("偏差", justify="right")
    table.add_column("容差", justify="right")
    table.add_column("说明", max_width=50)
    for r in results:
        mark = "[green]通过[/green]" if r.passed else "[red]失败[/red]"
        table.add_row(r.name, mark, f"{r.value:.3g}", f"{r.tolerance:.0e}", r.detail)
    console.print(table)

    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(f"[red]失败: {', '.join(failed)}[/red]")
        raise typer.Exit(code=1)
    console.print(f"[bold green]全部 {len(results)} 项通过[/bold green]")


@app.command(name="schedule-dump")
def schedule_dump(
    config_path: Path = typer.Argument(..., help="TOML 配置文件"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="写入 CSV 文件而非标准输出"),
):
    """
    导出噪声调度：t, beta, alpha_bar, beta_tilde, sigma, snr
    """
    from .core.experiment import SCHEDULE_HEADER, format_csv, write_csv
    from .models.config import load_config

    try:
        sched = load_config(config_path).build_schedule()
    except ValueError as e:
        _fail(e)

    if out is None:
        typer.echo(format_csv(SCHEDULE_HEADER, sched.to_rows()), nl=False)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, SCHEDULE_HEADER, sched.to_rows())
    console.print(f"[green]已写入 {out}[/green]")


@app.command()
def status(
    root: Path = typer.Option(DEFAULT_OUTPUT_ROOT, "--root", "-r", help="输出根目录"),
    limit: int = typer.Option(10, "--limit", "-n", help="显示的运行数"),
):
    """
    查看运行台账
    """
    from .core.database import RunLedger

    db_file = root / LEDGER_NAME
    if not db_file.exists():
        console.print("[yellow]台账不存在，请先运行 'snrlab run'[/yellow]")
        return

    ledger = RunLedger(db_file)
    try:
        info = ledger.get_status()
        runs = ledger.recent_runs(limit)
    finally:
        ledger.close()

    console.print("\n[bold]台账状态[/bold]")
    console.print(f"  台账路径: {db_file}")
    console.print(f"  总运行数: {info['total_runs']}")
    console.print(f"  最近运行: {info['last_run']}")

    table = Table(title="最近运行")
    table.add_column("run_id", style="cyan", no_wrap=True)
    table.add_column("命令")
    table.add_column("实验", style="yellow")
    table.add_column("配置")
    table.add_column("种子", justify="right")
    table.add_column("线程", justify="right")
    table.add_column("耗时", justify="right")
    for r in runs:
        table.add_row(
            r["run_id"],
            r["command"],
            r["experiment"],
            r["config_name"] or "-",
            str(r["seed"]) if r["seed"] is not None else "-",
            str(r["threads"]),
            f"{r['wall_clock']:.1f}s" if r["wall_clock"] is not None else "-",
        )
    console.print(table)


if __name__ == "__main__":
    app()
