"""Prometheus metrics for propagation runs and fits."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

from prometheus_client import REGISTRY, Counter, Gauge, Histogram, write_to_textfile

from adaptive_cspn.analysis.cost import CostReport

logger = logging.getLogger(__name__)

# Propagation
PROPAGATION_RUNS = Counter(
    "cspn_propagation_runs_total",
    "Total propagation runs",
    ["mode"],
)

MULT_ADDS = Counter(
    "cspn_mult_adds_total",
    "Multiply-adds counted by instrumented runs",
    ["mode"],
)

RUN_LATENCY = Histogram(
    "cspn_run_latency_seconds",
    "Wall time of one propagation run",
    ["mode"],
    buckets=(0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0),
)

SELECTED_COST = Gauge(
    "cspn_selected_cost",
    "Normalised latency cost of the last run",
    ["mode"],
)

# Fitting
FIT_EPOCHS = Counter("cspn_fit_epochs_total", "Total fit epochs evaluated")
FIT_FAILURES = Counter("cspn_fit_failures_total", "Fits that diverged")
FIT_LOSS = Gauge("cspn_fit_loss", "Objective value of the last evaluated epoch")
FIT_EXPECTED_COST = Gauge("cspn_fit_expected_cost", "E(c) of the last evaluated epoch")
FIT_RMSE = Gauge("cspn_fit_rmse_mm", "RMSE in millimetres of the last evaluated epoch")

# Error tracking
ERRORS_TOTAL = Counter(
    "cspn_errors_total", "Total errors by type", ["error_type", "component"]
)


def record_run(report: CostReport) -> None:
    """Account one instrumented propagation run."""
    PROPAGATION_RUNS.labels(mode=report.mode).inc()
    MULT_ADDS.labels(mode=report.mode).inc(report.actual_mult_adds)
    RUN_LATENCY.labels(mode=report.mode).observe(report.wall_time_s)
    SELECTED_COST.labels(mode=report.mode).set(report.expected_latency)


def record_epoch(loss: float, e_cost: float, rmse_mm: float) -> None:
    FIT_EPOCHS.inc()
    FIT_LOSS.set(loss)
    FIT_EXPECTED_COST.set(e_cost)
    FIT_RMSE.set(rmse_mm)


def record_error(error_type: str, component: str) -> None:
    ERRORS_TOTAL.labels(error_type=error_type, component=component).inc()


def write_metrics(path: Union[str, Path]) -> Path:
    """Dump the default registry in the text exposition format."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(target), REGISTRY)
    logger.debug("metrics written to %s", target)
    return target
