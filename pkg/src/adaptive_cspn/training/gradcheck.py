"""Central finite-difference verification of the analytic gradients.

Each sampled coordinate is compared on its own: the relative error is
|analytic - fd| / max(|analytic|, |fd|, 1e-8). The difference f(p + e) -
f(p - e) is taken on the unreduced objective, element by element, the way
output-wise numerical gradients are accumulated, so the sums over untouched
pixels and parameters do not add rounding to small gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from adaptive_cspn.core.errors import ContractError
from adaptive_cspn.core.grid import AffinityField, DepthGrid
from adaptive_cspn.core.params import AssemblyWeights, ObjectiveConfig, PropagationConfig
from adaptive_cspn.data_gen.rng import make_rng
from adaptive_cspn.training.gradients import FAMILIES, ModelParameters
from adaptive_cspn.training.objective import (
    ObjectiveBreakdown,
    TrainingInstance,
    breakdown_difference,
    forward,
    objective_and_grad,
    objective_breakdown,
)

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-8

# step of each family as a multiple of epsilon; raw affinity keeps epsilon
# next to its |kappa_hat| kink, the sigmoid logit families are smooth
FAMILY_STEP: Dict[str, float] = {
    "raw_affinity": 1.0,
    "alpha_logits": 10.0,
    "lambda_logits": 10.0,
    "confidence_logits": 10.0,
}


@dataclass
class GradCheckReport:
    """Worst error per parameter family and how many coordinates were checked.

    With ``scale="coordinate"`` (the default) each error is divided by
    max(|analytic|, |fd|) of the coordinate itself; ``scale="family"`` divides
    by the largest sampled gradient of the family instead. Both use a 1e-8
    floor.
    """

    max_error: float
    per_family: Dict[str, float] = field(default_factory=dict)
    coordinates: Dict[str, int] = field(default_factory=dict)
    steps: Dict[str, float] = field(default_factory=dict)
    epsilon: float = 1e-5
    scale: str = "coordinate"

    def passed(self, threshold: float = 1e-5) -> bool:
        return self.max_error < threshold


def _breakdown(params: ModelParameters, instance, config, obj) -> ObjectiveBreakdown:
    record = forward(params, instance, config)
    return objective_breakdown(params, instance, record.output, config, obj)


def _candidates(name: str, values: np.ndarray, step: float) -> np.ndarray:
    flat = values.ravel()
    if name == "raw_affinity":
        # |kappa_hat| has a kink at 0
        return np.nonzero(np.abs(flat) >= 10.0 * step)[0]
    return np.arange(flat.size)


def finite_difference_check(
    params: ModelParameters,
    instance: TrainingInstance,
    config: PropagationConfig,
    obj: ObjectiveConfig,
    epsilon: float = 1e-5,
    samples: int = 200,
    seed: int = 0,
    scale: str = "coordinate",
    family_step: Optional[Mapping[str, float]] = None,
) -> GradCheckReport:
    """Compare analytic gradients with (f(p + e) - f(p - e)) / (2 e).

    ``e`` is ``epsilon`` times the family multiplier from ``family_step``
    (default :data:`FAMILY_STEP`).
    """
    if not epsilon > 0:
        raise ContractError("epsilon must be positive")
    if scale not in ("family", "coordinate"):
        raise ContractError(f"unknown error scale {scale!r}")
    multipliers = dict(FAMILY_STEP if family_step is None else family_step)
    if any(not multipliers.get(name, 1.0) > 0 for name in FAMILIES):
        raise ContractError("family step multipliers must be positive")
    _, grads = objective_and_grad(params, instance, config, obj)
    shifted = params.copy()
    rng = make_rng(seed, "gradcheck")
    report = GradCheckReport(max_error=0.0, epsilon=epsilon, scale=scale)

    for name in FAMILIES:
        step = epsilon * float(multipliers.get(name, 1.0))
        values = shifted.family(name)
        flat = values.reshape(-1)
        analytic = grads.family(name).reshape(-1)
        candidates = _candidates(name, values, step)
        n = min(int(samples), candidates.size)
        report.steps[name] = step
        if n == 0:
            report.per_family[name] = 0.0
            report.coordinates[name] = 0
            continue
        picked = rng.choice(candidates, size=n, replace=False)
        numeric = np.empty(n)
        for j, idx in enumerate(picked):
            original = flat[idx]
            flat[idx] = original + step
            plus = _breakdown(shifted, instance, config, obj)
            flat[idx] = original - step
            minus = _breakdown(shifted, instance, config, obj)
            flat[idx] = original
            numeric[j] = breakdown_difference(plus, minus) / (2.0 * step)
        exact = analytic[picked]
        diff = np.abs(exact - numeric)
        if scale == "family":
            denom = max(float(np.abs(exact).max()), float(np.abs(numeric).max()), DENOMINATOR_FLOOR)
        else:
            denom = np.maximum(np.maximum(np.abs(exact), np.abs(numeric)), DENOMINATOR_FLOOR)
        error = float((diff / denom).max())
        report.per_family[name] = error
        report.coordinates[name] = n
        report.max_error = max(report.max_error, error)
        logger.debug("gradcheck %s: %d coordinates, step %.1e, max error %.3e", name, n, step, error)
    return report


def build_gradcheck_instance(
    seed: int, size: int = 6, with_budgets: bool = False
) -> Tuple[ModelParameters, TrainingInstance, PropagationConfig, ObjectiveConfig]:
    """Seeded size x size problem with O(1) values, kernels {3,5,7} and checkpoints {3,6}."""
    if size < 1:
        raise ContractError("gradcheck grid size must be positive")
    config = PropagationConfig(kernel_sizes=(3, 5, 7), iteration_checkpoints=(3, 6))
    obj = ObjectiveConfig(
        eta1=0.0005,
        eta2=0.1,
        depth_scale=1.0,
        latency_budget=0.2 if with_budgets else None,
        memory_budget=0.3 if with_budgets else None,
    )
    rng = make_rng(seed, "gradcheck")
    h = w = int(size)
    m = config.k_max * config.k_max - 1
    gt = rng.uniform(0.5, 1.5, size=(h, w))
    h0 = rng.uniform(0.5, 1.5, size=(h, w))
    mask = rng.random((h, w)) < 0.3
    raw = rng.choice([-1.0, 1.0], size=(h, w, m)) * rng.uniform(0.2, 1.0, size=(h, w, m))
    params = ModelParameters(
        raw=AffinityField(raw),
        weights=AssemblyWeights(
            rng.normal(0.0, 0.5, size=(h, w, config.num_kernels)),
            rng.normal(0.0, 0.5, size=(h, w, config.num_kernels, config.num_checkpoints)),
        ),
        confidence_logits=rng.normal(0.0, 1.0, size=(h, w)),
    )
    instance = TrainingInstance(
        h0=DepthGrid(h0),
        ground_truth=DepthGrid(gt),
        valid=np.ones((h, w), dtype=bool),
        sparse_values=np.where(mask, gt, 0.0),
        sparse_mask=mask,
    )
    return params, instance, config, obj


def run_gradcheck(
    seed: int, size: int = 6, epsilon: float = 1e-5, samples: int = 200
) -> GradCheckReport:
    params, instance, config, obj = build_gradcheck_instance(seed, size)
    return finite_difference_check(
        params, instance, config, obj, epsilon, samples, seed, scale="coordinate"
    )
