"""模块说明：Prometheus 指标与日志配置的测试。"""

import logging

from prometheus_client import REGISTRY

from adaptive_cspn.analysis.cost import CostReport
from adaptive_cspn.monitoring.metrics import record_epoch, record_error, record_run, write_metrics
from adaptive_cspn.utils.logging import LOG_LEVEL_ENV, setup_logging


def _sample(name, labels=None):
    return REGISTRY.get_sample_value(name, labels or {}) or 0.0


# 测试一次传播运行的指标记录
def test_record_run_counts_mult_adds():
    """测试运行计数、乘加计数与成本仪表是否更新。"""
    runs_before = _sample("cspn_propagation_runs_total", {"mode": "ra"})
    adds_before = _sample("cspn_mult_adds_total", {"mode": "ra"})
    report = CostReport("ra", 0.125, 0.2, 0.4, 0.5, 1234, 99, wall_time_s=0.01)

    record_run(report)

    assert _sample("cspn_propagation_runs_total", {"mode": "ra"}) == runs_before + 1
    assert _sample("cspn_mult_adds_total", {"mode": "ra"}) == adds_before + 1234
    assert _sample("cspn_selected_cost", {"mode": "ra"}) == 0.125
    assert _sample("cspn_run_latency_seconds_count", {"mode": "ra"}) >= 1


# 测试拟合轮次指标
def test_record_epoch_sets_gauges():
    """测试每轮拟合后损失、E(c) 与 RMSE 仪表的取值。"""
    before = _sample("cspn_fit_epochs_total")
    record_epoch(loss=2.5, e_cost=0.3, rmse_mm=410.0)
    assert _sample("cspn_fit_epochs_total") == before + 1
    assert _sample("cspn_fit_loss") == 2.5
    assert _sample("cspn_fit_expected_cost") == 0.3
    assert _sample("cspn_fit_rmse_mm") == 410.0


def test_record_error():
    labels = {"error_type": "RasterFormatError", "component": "cli"}
    before = _sample("cspn_errors_total", labels)
    record_error("RasterFormatError", "cli")
    assert _sample("cspn_errors_total", labels) == before + 1


def test_write_metrics_textfile(tmp_path):
    record_epoch(loss=1.0, e_cost=0.2, rmse_mm=100.0)
    path = write_metrics(tmp_path / "out" / "metrics.prom")
    text = path.read_text(encoding="utf-8")
    assert "cspn_fit_loss 1.0" in text
    assert "cspn_propagation_runs_total" in text


def test_setup_logging_env_override(monkeypatch):
    """环境变量优先于参数中的日志级别。"""
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    root.handlers = []
    try:
        monkeypatch.setenv(LOG_LEVEL_ENV, "WARNING")
        setup_logging("DEBUG")
        assert root.level == logging.WARNING
        assert root.handlers
    finally:
        root.handlers = saved_handlers
        root.setLevel(saved_level)
