"""计算代价模块：期望延迟/内存代价、选择代价与实测计数报告。

Latency is modelled as normalised multiply-adds: a (k, t) configuration costs
k^2 t / (N k_max^2). Memory is modelled as k^2 / k_max^2.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from adaptive_cspn.core.errors import ContractError
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig, normalize_logits_backward
from adaptive_cspn.engine.counters import ExecutionTrace
from adaptive_cspn.propagation.resource_aware import SelectionMap


def _axes(config: PropagationConfig) -> Tuple[np.ndarray, np.ndarray]:
    k2 = np.asarray(config.kernel_sizes, dtype=np.float64) ** 2
    t = np.asarray(config.iteration_checkpoints, dtype=np.float64)
    return k2, t


def expected_cost_map(weights: AssemblyWeights, config: PropagationConfig) -> np.ndarray:
    """逐像素期望延迟代价 c_x，形状 (H, W)。

    c_x = sum_{k,t} lambda_x(k,t) alpha_x(k) t k^2 / (N k_max^2)
    """
    weights.check_config(config)
    k2, t = _axes(config)
    mean_t = (weights.lambdas() * t).sum(axis=3)
    return (weights.alpha() * k2 * mean_t).sum(axis=2) / config.cost_normalizer


def expected_cost(weights: AssemblyWeights, config: PropagationConfig) -> float:
    """E(c) = mean_x c_x, see :func:`expected_cost_map`."""
    return float(expected_cost_map(weights, config).mean())


def expected_cost_grad(
    weights: AssemblyWeights, config: PropagationConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of E(c) on (alpha logits, lambda logits)."""
    k2, t = _axes(config)
    h, w = weights.shape
    scale = 1.0 / (h * w * config.cost_normalizer)
    alpha = weights.alpha()
    lam = weights.lambdas()
    d_alpha = k2 * (lam * t).sum(axis=3) * scale
    d_lambda = (alpha * k2)[:, :, :, None] * t * scale
    return (
        normalize_logits_backward(weights.alpha_logits, d_alpha, axis=-1),
        normalize_logits_backward(weights.lambda_logits, d_lambda, axis=-1),
    )


def selected_cost(selection: SelectionMap, config: PropagationConfig) -> float:
    """Mean over pixels of (k*)^2 t* / (N k_max^2)."""
    return float(selection.pixel_costs(config).mean())


def selected_memory(selection: SelectionMap, config: PropagationConfig) -> float:
    """Mean (k*)^2 / k_max^2 of a hard selection."""
    return float((selection.k_star.astype(np.float64) ** 2).mean() / config.k_max**2)


def expected_memory(weights: AssemblyWeights, config: PropagationConfig) -> float:
    """mean (k*)^2 / k_max^2 with k* the argmax of alpha (no minimum floor)."""
    weights.check_config(config)
    k2, _ = _axes(config)
    ki = np.argmax(weights.alpha_logits, axis=2)
    return float(k2[ki].mean() / config.k_max**2)


def soft_memory_map(weights: AssemblyWeights, config: PropagationConfig) -> np.ndarray:
    """Per-pixel sum_k alpha_x(k) k^2 / k_max^2."""
    k2, _ = _axes(config)
    return (weights.alpha() * k2).sum(axis=2) / config.k_max**2


def soft_expected_memory(weights: AssemblyWeights, config: PropagationConfig) -> float:
    """Differentiable memory surrogate, the mean of :func:`soft_memory_map`."""
    return float(soft_memory_map(weights, config).mean())


def soft_expected_memory_grad(weights: AssemblyWeights, config: PropagationConfig) -> np.ndarray:
    """方法说明：软内存代理对 alpha logits 的梯度，形状 (H, W, K)。

    与 lambda 无关，因此只返回 alpha 一族。
    """
    k2, _ = _axes(config)
    h, w = weights.shape
    d_alpha = np.broadcast_to(k2 / (h * w * config.k_max**2), weights.alpha_logits.shape)
    return normalize_logits_backward(weights.alpha_logits, d_alpha, axis=-1)


def expected_kernel(weights: AssemblyWeights, config: PropagationConfig) -> float:
    """E(k) of the soft mixture, normalised by k_max."""
    k = np.asarray(config.kernel_sizes, dtype=np.float64)
    return float((weights.alpha() * k).sum(axis=2).mean() / config.k_max)


def expected_iterations(weights: AssemblyWeights, config: PropagationConfig) -> float:
    """E(t) of the soft mixture, normalised by N."""
    _, t = _axes(config)
    per_kernel = (weights.lambdas() * t).sum(axis=3)
    return float((weights.alpha() * per_kernel).sum(axis=2).mean() / config.n_steps)


def dense_mult_adds(height: int, width: int, kernel_size: int, n_steps: int, channels: int = 1) -> int:
    """Closed-form multiply-adds of a dense run, counting in-image window slots only."""
    r = kernel_size // 2
    rows = sum(max(0, height - abs(dy)) for dy in range(-r, r + 1))
    cols = sum(max(0, width - abs(dx)) for dx in range(-r, r + 1))
    return int(channels * n_steps * rows * cols)


@dataclass
class CostReport:
    """Normalised expected costs next to the counted operations of one run."""

    mode: str
    expected_latency: float
    expected_memory: float
    mean_kernel: float
    mean_iters: float
    actual_mult_adds: int
    actual_peak_elements: int
    wall_time_s: float = 0.0

    def as_row(self) -> Dict[str, Any]:
        """Flat dict for the CSV/JSON writers."""
        return asdict(self)


def count_ops(trace: ExecutionTrace, config: PropagationConfig) -> CostReport:
    """Build a cost report from an instrumented trace.

    Resource-aware traces report the selection map, context-aware traces the
    soft mixture, and single-kernel traces their fixed (k, N).
    """
    counter = trace.counter
    if counter is None or not counter.enabled:
        raise ContractError("trace was recorded without operation counters")

    if isinstance(trace.selection, SelectionMap):
        sel = trace.selection
        latency = selected_cost(sel, config)
        memory = selected_memory(sel, config)
        mean_kernel = float(sel.k_star.mean() / config.k_max)
        mean_iters = float(sel.t_star.mean() / config.n_steps)
    elif isinstance(trace.weights, AssemblyWeights):
        latency = expected_cost(trace.weights, config)
        memory = soft_expected_memory(trace.weights, config)
        mean_kernel = expected_kernel(trace.weights, config)
        mean_iters = expected_iterations(trace.weights, config)
    else:
        k = trace.kernel_size if trace.kernel_size is not None else config.k_max
        n = trace.n_steps if trace.n_steps is not None else config.n_steps
        latency = k * k * n / config.cost_normalizer
        memory = k * k / config.k_max**2
        mean_kernel = k / config.k_max
        mean_iters = n / config.n_steps

    return CostReport(
        mode=trace.mode,
        expected_latency=float(latency),
        expected_memory=float(memory),
        mean_kernel=float(mean_kernel),
        mean_iters=float(mean_iters),
        actual_mult_adds=counter.mult_adds,
        actual_peak_elements=counter.peak_elements,
        wall_time_s=trace.wall_time_s,
    )


def mult_add_ratio(report: CostReport, baseline: CostReport) -> Optional[float]:
    """实测乘加次数相对基线的比例；基线计数为 0 时返回 None。"""
    if baseline.actual_mult_adds == 0:
        return None
    return report.actual_mult_adds / baseline.actual_mult_adds
