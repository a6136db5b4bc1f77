"""DuckDB 运行台账：记录每次 run/search/theory 的元数据、指标与搜索轨迹"""

import uuid
from pathlib import Path
from typing import Any

import duckdb

from ..models.report import ExperimentReport


class RunLedger:
    """运行台账；只追加写入，从不影响 CSV 内容"""

    def __init__(self, db_path: str | Path = "runs/ledger.duckdb"):
        self.db_path = Path(db_path)
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._conn: duckdb.DuckDBPyConnection | None = None

    @property
    def conn(self) -> duckdb.DuckDBPyConnection:
        if self._conn is None:
            self._conn = duckdb.connect(str(self.db_path))
            self._setup()
        return self._conn

    def _setup(self):
        """初始化数据库表"""
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                run_id VARCHAR PRIMARY KEY,
                command VARCHAR NOT NULL,
                experiment VARCHAR NOT NULL,
                config_name VARCHAR,
                config_hash VARCHAR NOT NULL,
                seed BIGINT,
                threads INTEGER,
                wall_clock DOUBLE,
                output_dir VARCHAR,
                created_at TIMESTAMP DEFAULT current_timestamp
            );
        """)
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS run_metrics (
                run_id VARCHAR NOT NULL,
                name VARCHAR NOT NULL,
                value DOUBLE,
                stderr DOUBLE
            );
        """)
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS search_trace (
                run_id VARCHAR NOT NULL,
                stage VARCHAR NOT NULL,
                lambda_l DOUBLE,
                lambda_h DOUBLE,
                objective DOUBLE,
                stderr DOUBLE,
                sliced_wasserstein DOUBLE
            );
        """)

    def record(
        self,
        command: str,
        report: ExperimentReport,
        threads: int,
        trace_rows: list[tuple] | None = None,
    ) -> str:
        """写入一次运行，返回 run_id"""
        run_id = uuid.uuid4().hex[:12]
        self.conn.execute(
            """
            INSERT INTO runs
            (run_id, command, experiment, config_name, config_hash, seed,
             threads, wall_clock, output_dir, created_at)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, current_timestamp)
            """,
            [
                run_id,
                command,
                report.experiment,
                report.config.get("name"),
                report.config_hash,
                report.seeds.get("run"),
                threads,
                report.wall_clock,
                report.output_dir,
            ],
        )
        for m in report.metrics:
            self.conn.execute(
                "INSERT INTO run_metrics VALUES (?, ?, ?, ?)",
                [run_id, m.name, m.value, m.stderr],
            )
        for row in trace_rows or []:
            self.conn.execute(
                "INSERT INTO search_trace VALUES (?, ?, ?, ?, ?, ?, ?)",
                [run_id, *row],
            )
        self.conn.commit()
        return run_id

    def recent_runs(self, limit: int = 10) -> list[dict[str, Any]]:
        """最近的运行（新的在前）"""
        result = self.conn.execute(
            """
            SELECT run_id, command, experiment, config_name, config_hash,
                   seed, threads, wall_clock, output_dir, created_at
            FROM runs
            ORDER BY created_at DESC
            LIMIT ?
            """,
            [limit],
        ).fetchall()
        return [
            {
                "run_id": r[0],
                "command": r[1],
                "experiment": r[2],
                "config_name": r[3],
                "config_hash": r[4],
                "seed": r[5],
                "threads": r[6],
                "wall_clock": r[7],
                "output_dir": r[8],
                "created_at": r[9],
            }
            for r in result
        ]

    def metrics_for(self, run_id: str) -> list[dict[str, Any]]:
        result = self.conn.execute(
            "SELECT name, value, stderr FROM run_metrics WHERE run_id = ? ORDER BY name",
            [run_id],
        ).fetchall()
        return [{"name": r[0], "value": r[1], "stderr": r[2]} for r in result]

    def get_status(self) -> dict[str, Any]:
        """台账概况"""
        result = self.conn.execute("""
            SELECT COUNT(*) AS total_runs, MAX(created_at) AS last_run
            FROM runs
        """).fetchone()
        return {"total_runs": result[0], "last_run": result[1]}

    def close(self):
        if self._conn:
            self._conn.close()
            self._conn = None
