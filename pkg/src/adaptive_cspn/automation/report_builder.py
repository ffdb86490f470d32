"""Build markdown reports from ablation payloads and benchmark rows."""

from __future__ import annotations

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from adaptive_cspn.automation.bench import (
    BENCH_COLUMNS,
    HARD_SELECTION_NOTE_RATIO,
    hard_selection_gap,
)


def _render_experiments(experiments: List[Dict[str, Any]]) -> str:
    rows = [
        "| 实验名称 | 结论 | 关键指标 |",
        "|---|---|---|",
    ]
    for experiment in experiments:
        name = str(experiment.get("name", "unknown"))
        metrics = experiment.get("metrics", {})
        if not isinstance(metrics, dict):
            metrics = {}
        verdict = "通过" if metrics.get("passed") else "未通过"
        compact = "; ".join(f"{k}={v}" for k, v in metrics.items() if k != "passed")
        rows.append(f"| {name} | {verdict} | {compact} |")
    return "\n".join(rows)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    return "-" if value is None else str(value)


def render_bench_table(rows: Sequence[Dict[str, Any]]) -> str:
    lines = [
        "| " + " | ".join(BENCH_COLUMNS) + " |",
        "|" + "---|" * len(BENCH_COLUMNS),
    ]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(row.get(c)) for c in BENCH_COLUMNS) + " |")
    return "\n".join(lines)


def build_markdown_report(
    payload: Dict[str, Any], bench_rows: Optional[Sequence[Dict[str, Any]]] = None
) -> str:
    """Markdown text for an ablation payload, with an optional efficiency table."""
    generated_at = payload.get("generated_at", datetime.now().isoformat())
    experiments = payload.get("experiments", [])
    if not isinstance(experiments, list):
        experiments = []
    passed = sum(1 for e in experiments if (e.get("metrics") or {}).get("passed"))

    lines = [
        "# 自适应空间传播消融报告",
        "",
        f"- 生成时间：{generated_at}",
        f"- 随机种子：{payload.get('seed', '-')}",
        f"- 迭代轮数：{payload.get('epochs', '-')}",
        f"- 通过实验：{passed}/{len(experiments)}",
        "",
        "## 实验明细",
        "",
        _render_experiments(experiments),
        "",
    ]
    if bench_rows:
        lines += ["## 效率对比", "", render_bench_table(bench_rows), ""]
    lines += [
        "## 说明",
        "",
        "- 所有对比均为同一随机种子下的成对拟合，只比较方向而非绝对数值。",
        "- 建议将本报告与原始 JSON 一同保存，保证可复现性。",
    ]
    if bench_rows:
        lines.append(
            "- RA-CSPN 行直接执行拟合所得软权重的 argmax 选择，未针对硬选择重新训练；"
            "其误差反映软组合与硬选择之差，并非传播实现的回退。"
        )
        gap = hard_selection_gap(bench_rows)
        if gap is not None and gap > HARD_SELECTION_NOTE_RATIO:
            lines.append(f"- 本次 RA-CSPN 的 RMSE 为 CA-CSPN 的 {gap:.1f} 倍。")
    lines.append("")
    return "\n".join(lines)


def write_markdown_report(
    payload: Dict[str, Any],
    output_path: str | Path,
    bench_rows: Optional[Sequence[Dict[str, Any]]] = None,
) -> Path:
    target = Path(output_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(build_markdown_report(payload, bench_rows), encoding="utf-8")
    return target


def write_markdown_report_from_json(input_json: str | Path, output_md: str | Path) -> Path:
    """Read an ablation JSON file and write its markdown report."""
    payload = json.loads(Path(input_json).read_text(encoding="utf-8"))
    return write_markdown_report(payload, output_md)
