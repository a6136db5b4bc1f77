"""实验报告数据模型"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class MetricValue:
    """一个带标准误的指标值"""

    name: str
    value: float
    stderr: float | None = None
    seed: int | None = None


@dataclass
class ExperimentReport:
    """
    一次实验的完整记录

    每个数值都能追溯到 seeds 中登记的种子与 config_hash 对应的配置。
    """

    experiment: str
    config: dict
    config_hash: str
    output_dir: str
    csv_paths: dict[str, str] = field(default_factory=dict)
    metrics: list[MetricValue] = field(default_factory=list)
    seeds: dict[str, int] = field(default_factory=dict)
    wall_clock: float = 0.0
    notes: dict[str, object] = field(default_factory=dict)

    def add_csv(self, key: str, path: Path) -> None:
        self.csv_paths[key] = str(path)

    def add_metric(
        self, name: str, value: float, stderr: float | None = None, seed: int | None = None
    ) -> None:
        self.metrics.append(MetricValue(name, float(value), None if stderr is None else float(stderr), seed))

    def metric(self, name: str) -> MetricValue:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path: Path) -> None:
        """报告 JSON；wall_clock 只进入报告，不进入任何 CSV"""
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n")

