"""Benchmark, ablation and report automation."""

from .ablation import AblationSettings, ExperimentResult, run_ablation_suite
from .bench import BENCH_COLUMNS, BenchRow, bench, hard_selection_gap, write_bench_table
from .report_builder import (
    build_markdown_report,
    write_markdown_report,
    write_markdown_report_from_json,
)

__all__ = [
    "AblationSettings",
    "BENCH_COLUMNS",
    "BenchRow",
    "ExperimentResult",
    "bench",
    "build_markdown_report",
    "hard_selection_gap",
    "run_ablation_suite",
    "write_bench_table",
    "write_markdown_report",
    "write_markdown_report_from_json",
]
