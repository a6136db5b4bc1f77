"""
实验配置

TOML 文件按小节解析为冻结的 dataclass；未知小节、未知键与类型错误
都会抛出 ConfigError，并带上完整的点号路径（如 "corection.mode"）。
"""

import hashlib
import json
import os
import tomllib
import types
import typing
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any

from .correction import CorrectionConfig
from .grid import Grid, GridShapeError
from .mixture import BiasProfile, GaussianMixture
from .schedule import (
    NoiseSchedule,
    ScheduleError,
    SigmaMode,
    build_cosine,
    build_linear,
    scaled_linear_bounds,
)

EXPERIMENTS = (
    "sample",
    "sliding-window",
    "forward-vs-reverse",
    "recon-norms",
    "theory-curves",
    "metrics",
    "gamma-psi",
    "ablation",
)
RECORD_FLAGS = ("states", "x0_hat", "eps_hat")


class ConfigError(ValueError):
    """配置无效；key_path 指向出错的键"""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


@dataclass(frozen=True)
class ScheduleSection:
    kind: str = "linear"
    T: int = 100
    # 缺省时使用 scaled_linear_bounds(T)
    beta_start: float | None = None
    beta_end: float | None = None
    cosine_s: float = 0.008
    cosine_max_beta: float = 0.999
    sigma_mode: str = "posterior"


@dataclass(frozen=True)
class MeanSpec:
    """均值网格描述：constant / checker / csv"""

    kind: str = "constant"
    value: float = 0.0
    amplitude: float = 0.0
    path: str = ""


@dataclass(frozen=True)
class ModeSection:
    weight: float = 1.0
    var: float = 0.25
    mean: MeanSpec = field(default_factory=lambda: MeanSpec(kind="checker", amplitude=0.5))


@dataclass(frozen=True)
class DataSection:
    channels: int = 1
    height: int = 8
    width: int = 8
    normalize: bool = False
    modes: list[ModeSection] = field(default_factory=lambda: [ModeSection()])


@dataclass(frozen=True)
class DenoiserSection:
    kind: str = "exact"
    gamma: float | str = 0.98
    phi: float | str = 0.1


@dataclass(frozen=True)
class RunSection:
    n_chains: int = 1000
    seed: int = 0
    record: list[str] = field(default_factory=list)
    sampler: str = "ancestral"
    ddim_steps: int = 10


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "sample"


@dataclass(frozen=True)
class DiagnosticsSection:
    # 缺省为 [t_probe]
    s_list: list[int] | None = None
    # 缺省为 1..T
    t_list: list[int] | None = None
    # 缺省为 T // 2
    t_probe: int | None = None
    n: int = 10000
    seeds: list[int] = field(default_factory=list)
    batch_sizes: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class MetricsSection:
    # 缺省与 run.n_chains 相同
    n_data: int | None = None
    n_proj: int = 64
    seed: int = 1234


@dataclass(frozen=True)
class SearchSection:
    lambda_l_min: float = 0.0
    lambda_l_max: float = 0.2
    lambda_h_min: float = 0.8
    lambda_h_max: float = 1.0
    coarse_step: float = 0.01
    fine_step: float = 0.001
    joint: bool = False


@dataclass(frozen=True)
class OutputSection:
    root: str = "runs"


SECTIONS: dict[str, type] = {
    "schedule": ScheduleSection,
    "data": DataSection,
    "denoiser": DenoiserSection,
    "correction": CorrectionConfig,
    "run": RunSection,
    "experiment": ExperimentSection,
    "diagnostics": DiagnosticsSection,
    "metrics": MetricsSection,
    "search": SearchSection,
    "output": OutputSection,
}


def _type_name(tp: Any) -> str:
    return getattr(tp, "__name__", None) or str(tp)


def _coerce(value: Any, tp: Any, key_path: str) -> Any:
    """按类型注解检查并转换单个值"""
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _coerce(value, arg, key_path)
            except ConfigError:
                continue
        names = " | ".join(_type_name(a) for a in args if a is not type(None))
        raise ConfigError(key_path, f"期望类型 {names}，收到 {value!r}")
    if origin is list:
        (item_tp,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(key_path, f"期望列表，收到 {value!r}")
        return [_coerce(v, item_tp, f"{key_path}[{i}]") for i, v in enumerate(value)]
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError:
            choices = ", ".join(m.value for m in tp)
            raise ConfigError(key_path, f"取值必须是 {{{choices}}} 之一，收到 {value!r}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(key_path, f"期望 bool，收到 {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key_path, f"期望 int，收到 {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key_path, f"期望 float，收到 {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key_path, f"期望 str，收到 {value!r}")
        return value
    if isinstance(tp, type) and hasattr(tp, "__dataclass_fields__"):
        return _build_section(tp, value, key_path)
    raise ConfigError(key_path, f"不支持的类型 {_type_name(tp)}")


def _build_section(cls: type, raw: Any, prefix: str) -> Any:
    """严格地把一个 TOML 表转换成 dataclass 实例"""
    if not isinstance(raw, dict):
        raise ConfigError(prefix, f"期望表，收到 {raw!r}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", f"未知配置键（可用: {', '.join(sorted(known))}）")
    kwargs = {k: _coerce(v, hints[k], f"{prefix}.{k}") for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(prefix, str(e)) from e


def _check_choice(key_path: str, value: str, choices: tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigError(key_path, f"取值必须是 {{{', '.join(choices)}}} 之一，收到 {value!r}")


@dataclass(frozen=True)
class LabConfig:
    """完整实验配置"""

    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    data: DataSection = field(default_factory=DataSection)
    denoiser: DenoiserSection = field(default_factory=DenoiserSection)
    correction: CorrectionConfig = field(default_factory=CorrectionConfig)
    run: RunSection = field(default_factory=RunSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    search: SearchSection = field(default_factory=SearchSection)
    output: OutputSection = field(default_factory=OutputSection)
    name: str = "default"
    base_dir: str = "."

    @classmethod
    def from_dict(cls, raw: dict, name: str = "default", base_dir: str | Path = ".") -> "LabConfig":
        """从已解析的字典构造并做全部语义校验"""
        for key, value in raw.items():
            if key not in SECTIONS:
                path = f"{key}.{next(iter(value))}" if isinstance(value, dict) and value else key
                raise ConfigError(path, f"未知配置小节 '{key}'（可用: {', '.join(SECTIONS)}）")
        sections = {k: _build_section(SECTIONS[k], v, k) for k, v in raw.items()}
        config = cls(name=name, base_dir=str(base_dir), **sections)
        config.validate()
        return config

    def validate(self) -> None:
        """跨字段校验；所有错误都在创建输出目录之前抛出"""
        s = self.schedule
        _check_choice("schedule.kind", s.kind, ("linear", "cosine"))
        _check_choice("schedule.sigma_mode", s.sigma_mode, tuple(m.value for m in SigmaMode))
        if s.T < 1:
            raise ConfigError("schedule.T", f"必须为正整数，收到 {s.T}")
        try:
            schedule = self.build_schedule()
        except ScheduleError as e:
            raise ConfigError("schedule", str(e)) from e

        d = self.data
        if not d.modes:
            raise ConfigError("data.modes", "至少需要一个混合成分")
        for i, mode in enumerate(d.modes):
            _check_choice(f"data.modes[{i}].mean.kind", mode.mean.kind, ("constant", "checker", "csv"))
        try:
            self.build_mixture()
        except (GridShapeError, ValueError, OSError) as e:
            raise ConfigError("data", str(e)) from e

        _check_choice("denoiser.kind", self.denoiser.kind, ("exact", "biased"))
        if self.denoiser.kind == "biased":
            try:
                self.build_bias()
            except (ValueError, OSError) as e:
                raise ConfigError("denoiser", str(e)) from e

        r = self.run
        if r.n_chains < 1:
            raise ConfigError("run.n_chains", f"必须至少为 1，收到 {r.n_chains}")
        for i, flag in enumerate(r.record):
            _check_choice(f"run.record[{i}]", flag, RECORD_FLAGS)
        _check_choice("run.sampler", r.sampler, ("ancestral", "ddim"))
        if not 1 <= r.ddim_steps <= schedule.T:
            raise ConfigError("run.ddim_steps", f"必须位于 [1, {schedule.T}]，收到 {r.ddim_steps}")
        if self.correction.t_s > schedule.T:
            raise ConfigError("correction.t_s", f"必须位于 [0, {schedule.T}]，收到 {self.correction.t_s}")

        _check_choice("experiment.name", self.experiment.name, EXPERIMENTS)

        dg = self.diagnostics
        for key in ("s_list", "t_list"):
            steps = getattr(dg, key)
            if steps is not None:
                if not steps:
                    raise ConfigError(f"diagnostics.{key}", "时间步列表为空")
                bad = [t for t in steps if not 1 <= t <= schedule.T]
                if bad:
                    raise ConfigError(f"diagnostics.{key}", f"时间步超出 [1, {schedule.T}]: {bad}")
        if dg.n < 1:
            raise ConfigError("diagnostics.n", f"必须至少为 1，收到 {dg.n}")
        if any(b < 1 for b in dg.batch_sizes):
            raise ConfigError("diagnostics.batch_sizes", "批大小必须为正")

        m = self.metrics
        if m.n_proj < 1:
            raise ConfigError("metrics.n_proj", f"必须至少为 1，收到 {m.n_proj}")
        if m.n_data is not None and m.n_data < 1:
            raise ConfigError("metrics.n_data", f"必须至少为 1，收到 {m.n_data}")

        sr = self.search
        if not 0 <= sr.lambda_l_min <= sr.lambda_l_max:
            raise ConfigError("search.lambda_l_min", "要求 0 <= lambda_l_min <= lambda_l_max")
        if not 0 <= sr.lambda_h_min <= sr.lambda_h_max <= 1:
            raise ConfigError("search.lambda_h_min", "要求 0 <= lambda_h_min <= lambda_h_max <= 1")
        if sr.coarse_step <= 0 or sr.fine_step <= 0 or sr.fine_step > sr.coarse_step:
            raise ConfigError("search.fine_step", "要求 0 < fine_step <= coarse_step")

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def build_schedule(self) -> NoiseSchedule:
        s = self.schedule
        if s.kind == "cosine":
            return build_cosine(s.T, s.cosine_s, s.cosine_max_beta, s.sigma_mode)
        lo, hi = scaled_linear_bounds(s.T)
        start = lo if s.beta_start is None else s.beta_start
        end = hi if s.beta_end is None else s.beta_end
        return build_linear(s.T, start, end, s.sigma_mode)

    def _mean_grid(self, spec: MeanSpec) -> Grid:
        shape = (self.data.channels, self.data.height, self.data.width)
        if spec.kind == "checker":
            return Grid.checker(spec.amplitude, *shape)
        if spec.kind == "csv":
            grid = Grid.from_csv(self._resolve(spec.path))
            if grid.shape != shape:
                raise GridShapeError(f"均值 CSV 形状 {grid.shape} 与 data 声明的 {shape} 不一致")
            return grid
        return Grid.constant(spec.value, *shape)

    def build_mixture(self) -> GaussianMixture:
        modes = [(m.weight, self._mean_grid(m.mean), m.var) for m in self.data.modes]
        return GaussianMixture.from_modes(modes, normalize=self.data.normalize)

    def build_bias(self) -> BiasProfile:
        def resolve(v):
            return v if isinstance(v, float) else self._resolve(v)

        return BiasProfile.from_csv(
            self.schedule.T, resolve(self.denoiser.gamma), resolve(self.denoiser.phi)
        )

    @property
    def t_probe(self) -> int:
        return self.diagnostics.t_probe or max(1, self.schedule.T // 2)

    @property
    def n_data(self) -> int:
        return self.metrics.n_data or self.run.n_chains

    def snapshot(self) -> dict:
        """可 JSON 序列化的规范化快照"""

        def clean(v):
            if isinstance(v, Enum):
                return v.value
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        snap = {name: clean(asdict(getattr(self, name))) for name in SECTIONS}
        snap["name"] = self.name
        return snap

    @property
    def config_hash(self) -> str:
        payload = json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    @property
    def output_dir(self) -> Path:
        return self._resolve(self.output.root) / self.name


def load_config(path: str | Path) -> LabConfig:
    """读取 TOML 配置文件；输出目录以文件名（不含后缀）命名"""
    path = Path(path)
    try:
        with path.open("rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError("<file>", f"配置文件不存在: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<file>", f"TOML 解析失败: {e}") from e
    return LabConfig.from_dict(raw, name=path.stem, base_dir=path.parent)


def thread_count() -> int:
    """工作线程数：SNRLAB_THREADS，缺省为 CPU 数"""
    raw = os.environ.get("SNRLAB_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("SNRLAB_THREADS", f"期望正整数，收到 {raw!r}") from None
    if n < 1:
        raise ConfigError("SNRLAB_THREADS", f"期望正整数，收到 {raw!r}")
    return n

