"""Cost accounting and error metrics."""

from .cost import (
    CostReport,
    count_ops,
    dense_mult_adds,
    expected_cost,
    expected_cost_grad,
    expected_cost_map,
    expected_iterations,
    expected_kernel,
    expected_memory,
    mult_add_ratio,
    selected_cost,
    selected_memory,
    soft_expected_memory,
    soft_expected_memory_grad,
    soft_memory_map,
)
from .metrics import DepthMetrics, depth_metrics

__all__ = [
    "CostReport",
    "DepthMetrics",
    "count_ops",
    "dense_mult_adds",
    "depth_metrics",
    "expected_cost",
    "expected_cost_grad",
    "expected_cost_map",
    "expected_iterations",
    "expected_kernel",
    "expected_memory",
    "mult_add_ratio",
    "selected_cost",
    "selected_memory",
    "soft_expected_memory",
    "soft_expected_memory_grad",
    "soft_memory_map",
]
