"""Plain gradient descent on the per-pixel propagation parameters.

Every term of the objective is a mean over pixels, so each step moves a
parameter by ``step_size * H * W * grad``; the step size is then independent
of the image resolution. The anchor H_0 (k-NN densified sparse depth) stays
fixed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from adaptive_cspn.analysis.metrics import depth_metrics
from adaptive_cspn.core.errors import ContractError, DimensionError, DivergenceError
from adaptive_cspn.core.grid import AffinityField, DepthGrid
from adaptive_cspn.core.params import AssemblyWeights, ObjectiveConfig, PropagationConfig
from adaptive_cspn.data_gen.rng import make_rng
from adaptive_cspn.data_gen.scene import SyntheticScene, densify_sparse
from adaptive_cspn.engine.concurrency import BranchRunner
from adaptive_cspn.training.gradients import ModelParameters
from adaptive_cspn.training.objective import (
    ObjectiveTerms,
    TrainingInstance,
    objective_grad_output,
)

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "loss", "rmse_mm", "mae_mm", "irmse_ikm", "imae_ikm", "e_cost", "e_mem")


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    rmse_mm: float
    mae_mm: float
    irmse_ikm: float
    imae_ikm: float
    e_cost: float
    e_mem: float

    def as_row(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class FitResult:
    """Final parameters and the metric history; ``history[0]`` is the initial state."""

    params: ModelParameters
    history: List[EpochMetrics] = field(default_factory=list)
    wall_time_s: float = 0.0
    failed: bool = False
    failed_epoch: Optional[int] = None
    message: str = ""
    h0: Optional[DepthGrid] = None

    @property
    def final(self) -> EpochMetrics:
        return self.history[-1]

    def losses(self) -> List[float]:
        return [m.loss for m in self.history]

    def raise_for_failure(self) -> None:
        if self.failed:
            raise DivergenceError(self.message, self.failed_epoch or 0)


def training_instance(scene: SyntheticScene, neighbors: Optional[int] = None) -> TrainingInstance:
    """Fit inputs for a scene: k-NN densified anchor plus its ground truth."""
    k = scene.spec.sampling.knn_neighbors if neighbors is None else neighbors
    return TrainingInstance(
        h0=densify_sparse(scene.sparse, k),
        ground_truth=scene.ground_truth,
        valid=scene.valid_mask(),
        sparse_values=scene.sparse.values,
        sparse_mask=scene.sparse.mask,
    )


def initial_parameters(
    scene: SyntheticScene, config: PropagationConfig, seed: int, noise: float = 0.05
) -> ModelParameters:
    """kappa_hat ~ U[-noise, noise], uniform alpha and lambda, confidence from the samples."""
    h, w = scene.shape
    rng = make_rng(seed, "init")
    raw = rng.uniform(-noise, noise, size=(h, w, config.k_max * config.k_max - 1))
    return ModelParameters(
        raw=AffinityField(raw),
        weights=AssemblyWeights.uniform(h, w, config),
        confidence_logits=scene.sparse.confidence_logits.copy(),
    )


def _snapshot(
    epoch: int, output: DepthGrid, instance: TrainingInstance, terms: ObjectiveTerms
) -> EpochMetrics:
    m = depth_metrics(output, instance.ground_truth, instance.valid)
    return EpochMetrics(
        epoch=epoch,
        loss=terms.total,
        rmse_mm=m.rmse,
        mae_mm=m.mae,
        irmse_ikm=m.irmse,
        imae_ikm=m.imae,
        e_cost=terms.expected_cost,
        e_mem=terms.expected_memory,
    )


def fit(
    scene: SyntheticScene,
    config: PropagationConfig,
    obj: ObjectiveConfig,
    epochs: int,
    step_size: float,
    seed: int,
    freeze_confidence: Optional[float] = None,
    initial: Optional[ModelParameters] = None,
    workers: int = 1,
    on_epoch: Optional[Callable[[EpochMetrics], None]] = None,
    init_noise: float = 0.05,
) -> FitResult:
    """Optimise kappa_hat, alpha_hat, lambda_hat and g_hat on one scene.

    ``freeze_confidence`` pins g_hat at that logit on every sampled pixel and
    excludes it from the update (hard-replacement baseline).
    """
    if epochs < 1:
        raise ContractError(f"epochs must be at least 1, got {epochs}")
    if not step_size > 0:
        raise ContractError(f"step_size must be positive, got {step_size}")

    started = time.perf_counter()
    instance = training_instance(scene)
    if initial is not None:
        params = initial.copy()
    else:
        params = initial_parameters(scene, config, seed, init_noise)
    if freeze_confidence is not None:
        params.confidence_logits = np.where(instance.sparse_mask, float(freeze_confidence), 0.0)
    h, w = scene.shape
    step = step_size * h * w

    result = FitResult(params=params, h0=instance.h0)
    with BranchRunner(workers) as runner:
        for epoch in range(epochs + 1):
            terms, grads, output = objective_grad_output(params, instance, config, obj, runner)
            if not np.isfinite(terms.total) or not grads.all_finite():
                result.failed = True
                result.failed_epoch = epoch
                result.message = f"objective became non-finite at epoch {epoch}"
                logger.warning("fit diverged at epoch %d", epoch)
                break
            metrics = _snapshot(epoch, output, instance, terms)
            result.history.append(metrics)
            if on_epoch is not None:
                on_epoch(metrics)
            if epoch == epochs:
                break
            if freeze_confidence is not None:
                grads.d_confidence_logits[...] = 0.0
            try:
                params = params.descend(grads, step)
            except DimensionError:
                result.failed = True
                result.failed_epoch = epoch + 1
                result.message = f"parameters became non-finite at epoch {epoch + 1}"
                logger.warning("fit diverged at epoch %d", epoch + 1)
                break
            result.params = params
            logger.debug("epoch %d loss %.6f rmse %.1f", epoch, metrics.loss, metrics.rmse_mm)

    result.wall_time_s = time.perf_counter() - started
    if result.history:
        logger.info(
            "fit finished: epochs=%d loss=%.6f rmse=%.1fmm e_cost=%.4f",
            len(result.history) - 1,
            result.final.loss,
            result.final.rmse_mm,
            result.final.e_cost,
        )
    return result
