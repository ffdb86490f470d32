"""Training objective: data term, weight decay, expected cost and budget hinges.

L = mean_valid ((D - D*) * s)^2
    + eta1 / (hw) * (|kappa_hat|^2 + |alpha_hat|^2 + |lambda_hat|^2 + |m * g_hat|^2)
    + eta2 * E(c)
    + eta2' * [E(c) - C_l]_+ + eta3 * [E_soft(cm) - C_m]_+

with s the depth scale (millimetres to metres by default). The hinge
gradient is zero at and below the budget.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from adaptive_cspn.analysis.cost import (
    expected_cost,
    expected_cost_grad,
    expected_cost_map,
    expected_memory,
    soft_expected_memory,
    soft_expected_memory_grad,
    soft_memory_map,
)
from adaptive_cspn.core.errors import ContractError
from adaptive_cspn.core.grid import DepthGrid, SparseObservations, check_same_plane
from adaptive_cspn.core.params import ObjectiveConfig, PropagationConfig
from adaptive_cspn.engine.concurrency import BranchRunner
from adaptive_cspn.propagation.context_aware import CAForwardRecord, forward_ca_cspn
from adaptive_cspn.training.gradients import ModelParameters, ParameterGradients, backward


@dataclass
class TrainingInstance:
    """Fixed inputs of a fit: anchor H_0, ground truth and sparse samples."""

    h0: DepthGrid
    ground_truth: DepthGrid
    valid: np.ndarray
    sparse_values: np.ndarray
    sparse_mask: np.ndarray

    def __post_init__(self) -> None:
        self.valid = np.asarray(self.valid, dtype=bool)
        self.sparse_mask = np.asarray(self.sparse_mask, dtype=bool)
        self.sparse_values = np.asarray(self.sparse_values, dtype=np.float64)
        check_same_plane(
            self.h0.shape,
            self.ground_truth.shape,
            self.valid.shape,
            self.sparse_values.shape,
            self.sparse_mask.shape,
        )
        if not self.valid.any():
            raise ContractError("no valid ground-truth pixel")

    def observations(self, confidence_logits: np.ndarray) -> SparseObservations:
        return SparseObservations(self.sparse_values, self.sparse_mask, confidence_logits)


@dataclass
class ObjectiveTerms:
    total: float
    data: float
    decay: float
    cost: float
    latency_hinge: float
    memory_hinge: float
    expected_cost: float
    expected_memory: float
    soft_memory: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _hinge(value: float, budget: Optional[float]) -> Tuple[float, float]:
    """([value - budget]_+, slope) with slope 0 at the kink."""
    if budget is None:
        return 0.0, 0.0
    excess = value - budget
    return (excess, 1.0) if excess > 0 else (0.0, 0.0)


def forward(
    params: ModelParameters,
    instance: TrainingInstance,
    config: PropagationConfig,
    keep_snapshots: bool = False,
    runner: Optional[BranchRunner] = None,
) -> CAForwardRecord:
    obs = instance.observations(params.confidence_logits)
    return forward_ca_cspn(
        instance.h0,
        params.raw,
        obs,
        params.weights,
        config,
        keep_snapshots=keep_snapshots,
        runner=runner,
    )


def objective_terms(
    params: ModelParameters,
    instance: TrainingInstance,
    output: np.ndarray,
    config: PropagationConfig,
    obj: ObjectiveConfig,
) -> Tuple[ObjectiveTerms, np.ndarray]:
    """Objective value for a given output, plus the data-term cotangent on it."""
    scale = obj.depth_scale
    gt = instance.ground_truth.values[:, :, :1]
    valid = instance.valid[:, :, None]
    channels = output.shape[2]
    n_valid = int(instance.valid.sum()) * channels
    resid = np.where(valid, output - gt, 0.0)
    data = float(((resid * scale) ** 2).sum() / n_valid)
    d_output = 2.0 * scale * scale * resid / n_valid

    h, w = instance.valid.shape
    masked_conf = np.where(instance.sparse_mask, params.confidence_logits, 0.0)
    decay = obj.eta1 / (h * w) * float(
        (params.raw.raw**2).sum()
        + (params.weights.alpha_logits**2).sum()
        + (params.weights.lambda_logits**2).sum()
        + (masked_conf**2).sum()
    )

    e_cost = expected_cost(params.weights, config)
    soft_mem = soft_expected_memory(params.weights, config)
    lat_excess, _ = _hinge(e_cost, obj.latency_budget)
    mem_excess, _ = _hinge(soft_mem, obj.memory_budget)
    cost = obj.eta2 * e_cost
    latency_hinge = obj.eta2_prime * lat_excess
    memory_hinge = obj.eta3 * mem_excess
    terms = ObjectiveTerms(
        total=data + decay + cost + latency_hinge + memory_hinge,
        data=data,
        decay=decay,
        cost=cost,
        latency_hinge=latency_hinge,
        memory_hinge=memory_hinge,
        expected_cost=e_cost,
        expected_memory=expected_memory(params.weights, config),
        soft_memory=soft_mem,
    )
    return terms, d_output


def objective_and_grad(
    params: ModelParameters,
    instance: TrainingInstance,
    config: PropagationConfig,
    obj: ObjectiveConfig,
    runner: Optional[BranchRunner] = None,
) -> Tuple[ObjectiveTerms, ParameterGradients]:
    """Objective value and its analytic gradient on every parameter family."""
    terms, grads, _ = objective_grad_output(params, instance, config, obj, runner)
    return terms, grads


def objective_grad_output(
    params: ModelParameters,
    instance: TrainingInstance,
    config: PropagationConfig,
    obj: ObjectiveConfig,
    runner: Optional[BranchRunner] = None,
) -> Tuple[ObjectiveTerms, ParameterGradients, DepthGrid]:
    """Like :func:`objective_and_grad`, also returning the propagated output."""
    record = forward(params, instance, config, keep_snapshots=True, runner=runner)
    terms, d_output = objective_terms(params, instance, record.output, config, obj)
    grads = backward(record, d_output)

    h, w = instance.valid.shape
    decay_scale = 2.0 * obj.eta1 / (h * w)
    grads.d_raw_affinity += decay_scale * params.raw.raw
    grads.d_alpha_logits += decay_scale * params.weights.alpha_logits
    grads.d_lambda_logits += decay_scale * params.weights.lambda_logits
    grads.d_confidence_logits += np.where(
        instance.sparse_mask, decay_scale * params.confidence_logits, 0.0
    )

    _, lat_slope = _hinge(terms.expected_cost, obj.latency_budget)
    _, mem_slope = _hinge(terms.soft_memory, obj.memory_budget)
    cost_weight = obj.eta2 + obj.eta2_prime * lat_slope
    if cost_weight:
        d_alpha, d_lambda = expected_cost_grad(params.weights, config)
        grads.d_alpha_logits += cost_weight * d_alpha
        grads.d_lambda_logits += cost_weight * d_lambda
    if mem_slope:
        grads.d_alpha_logits += obj.eta3 * mem_slope * soft_expected_memory_grad(
            params.weights, config
        )
    return terms, grads, DepthGrid(record.output)


def evaluate(
    params: ModelParameters,
    instance: TrainingInstance,
    config: PropagationConfig,
    obj: ObjectiveConfig,
    runner: Optional[BranchRunner] = None,
) -> Tuple[DepthGrid, ObjectiveTerms]:
    """Forward pass and objective value without gradients."""
    record = forward(params, instance, config, runner=runner)
    terms, _ = objective_terms(params, instance, record.output, config, obj)
    return DepthGrid(record.output), terms


@dataclass
class ObjectiveBreakdown:
    """The objective before any reduction over pixels or parameters.

    Every entry of ``parts`` is an array whose sum is one additive term; the
    budget hinges keep their per-pixel cost maps (each summing to the
    expected cost it bounds). Two breakdowns of nearby parameters can then be
    differenced element by element, see :func:`breakdown_difference`.
    """

    parts: Dict[str, np.ndarray]
    cost_map: np.ndarray
    memory_map: np.ndarray
    latency_budget: Optional[float]
    memory_budget: Optional[float]
    eta2_prime: float
    eta3: float

    @property
    def latency_excess(self) -> float:
        return _hinge(float(self.cost_map.sum()), self.latency_budget)[0]

    @property
    def memory_excess(self) -> float:
        return _hinge(float(self.memory_map.sum()), self.memory_budget)[0]

    @property
    def total(self) -> float:
        value = sum(float(part.sum()) for part in self.parts.values())
        return value + self.eta2_prime * self.latency_excess + self.eta3 * self.memory_excess


def objective_breakdown(
    params: ModelParameters,
    instance: TrainingInstance,
    output: np.ndarray,
    config: PropagationConfig,
    obj: ObjectiveConfig,
) -> ObjectiveBreakdown:
    """Unreduced form of :func:`objective_terms`; ``total`` equals ``terms.total``."""
    scale = obj.depth_scale
    gt = instance.ground_truth.values[:, :, :1]
    valid = instance.valid[:, :, None]
    n_valid = int(instance.valid.sum()) * output.shape[2]
    resid = np.where(valid, output - gt, 0.0)
    h, w = instance.valid.shape
    decay = obj.eta1 / (h * w)
    masked_conf = np.where(instance.sparse_mask, params.confidence_logits, 0.0)
    cost_map = expected_cost_map(params.weights, config) / (h * w)
    return ObjectiveBreakdown(
        parts={
            "data": (resid * scale) ** 2 / n_valid,
            "decay_raw_affinity": decay * params.raw.raw**2,
            "decay_alpha_logits": decay * params.weights.alpha_logits**2,
            "decay_lambda_logits": decay * params.weights.lambda_logits**2,
            "decay_confidence_logits": decay * masked_conf**2,
            "cost": obj.eta2 * cost_map,
        },
        cost_map=cost_map,
        memory_map=soft_memory_map(params.weights, config) / (h * w),
        latency_budget=obj.latency_budget,
        memory_budget=obj.memory_budget,
        eta2_prime=obj.eta2_prime,
        eta3=obj.eta3,
    )


def _hinge_difference(
    plus: np.ndarray, minus: np.ndarray, budget: Optional[float]
) -> float:
    plus_excess, _ = _hinge(float(plus.sum()), budget)
    minus_excess, _ = _hinge(float(minus.sum()), budget)
    if plus_excess > 0 and minus_excess > 0:
        return float((plus - minus).sum())
    return plus_excess - minus_excess


def breakdown_difference(plus: ObjectiveBreakdown, minus: ObjectiveBreakdown) -> float:
    """plus.total - minus.total, subtracting elementwise before summing.

    Elements a perturbation does not reach cancel exactly, so the result
    carries the rounding of the changed elements only.
    """
    diff = sum(float((plus.parts[name] - minus.parts[name]).sum()) for name in plus.parts)
    diff += plus.eta2_prime * _hinge_difference(plus.cost_map, minus.cost_map, plus.latency_budget)
    diff += plus.eta3 * _hinge_difference(plus.memory_map, minus.memory_map, plus.memory_budget)
    return diff
