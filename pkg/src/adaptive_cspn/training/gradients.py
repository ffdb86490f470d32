"""Reverse-mode gradients of the context-aware propagation output.

The backward pass walks the recorded forward run: final guided replacement,
alpha assembly, per-branch lambda accumulation, per-step guided replacement
and the propagation step itself, then pulls the kernel gradients back
through the L1 affinity normalisation and the sigmoid normalisations of
alpha and lambda.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Tuple, Union

import numpy as np

from adaptive_cspn.core.errors import ContractError, DimensionError
from adaptive_cspn.core.grid import AffinityField, DepthGrid, gather_neighbors, scatter_neighbors
from adaptive_cspn.core.params import AssemblyWeights, normalize_logits_backward, sigmoid
from adaptive_cspn.propagation.affinity import normalize_backward
from adaptive_cspn.propagation.context_aware import CAForwardRecord

logger = logging.getLogger(__name__)

FAMILIES: Tuple[str, ...] = ("raw_affinity", "alpha_logits", "lambda_logits", "confidence_logits")


@dataclass
class ModelParameters:
    """Per-pixel free parameters optimised by ``fit``."""

    raw: AffinityField
    weights: AssemblyWeights
    confidence_logits: np.ndarray

    def __post_init__(self) -> None:
        self.confidence_logits = np.array(self.confidence_logits, dtype=np.float64)
        if self.confidence_logits.shape != self.raw.shape or self.weights.shape != self.raw.shape:
            raise DimensionError("parameter families must share one (H, W) plane")

    def family(self, name: str) -> np.ndarray:
        """Live array of one family; edits write through."""
        if name == "raw_affinity":
            return self.raw.raw
        if name == "alpha_logits":
            return self.weights.alpha_logits
        if name == "lambda_logits":
            return self.weights.lambda_logits
        if name == "confidence_logits":
            return self.confidence_logits
        raise KeyError(name)

    def families(self) -> Dict[str, np.ndarray]:
        return {name: self.family(name) for name in FAMILIES}

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            raw=AffinityField(self.raw.raw.copy()),
            weights=AssemblyWeights(
                self.weights.alpha_logits.copy(), self.weights.lambda_logits.copy()
            ),
            confidence_logits=self.confidence_logits.copy(),
        )

    def descend(self, grads: "ParameterGradients", step_size: float) -> "ModelParameters":
        """New parameters one gradient step downhill."""
        return ModelParameters(
            raw=AffinityField(self.raw.raw - step_size * grads.d_raw_affinity),
            weights=AssemblyWeights(
                self.weights.alpha_logits - step_size * grads.d_alpha_logits,
                self.weights.lambda_logits - step_size * grads.d_lambda_logits,
            ),
            confidence_logits=self.confidence_logits - step_size * grads.d_confidence_logits,
        )


@dataclass
class ParameterGradients:
    d_raw_affinity: np.ndarray
    d_alpha_logits: np.ndarray
    d_lambda_logits: np.ndarray
    d_confidence_logits: np.ndarray
    d_h0: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParameters, h0_shape: Tuple[int, ...]) -> "ParameterGradients":
        return cls(
            np.zeros_like(params.raw.raw),
            np.zeros_like(params.weights.alpha_logits),
            np.zeros_like(params.weights.lambda_logits),
            np.zeros_like(params.confidence_logits),
            np.zeros(h0_shape),
        )

    def family(self, name: str) -> np.ndarray:
        return getattr(self, f"d_{name}")

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in FAMILIES:
            yield name, self.family(name)

    def scaled(self, factor: float) -> "ParameterGradients":
        return ParameterGradients(
            d_raw_affinity=factor * self.d_raw_affinity,
            d_alpha_logits=factor * self.d_alpha_logits,
            d_lambda_logits=factor * self.d_lambda_logits,
            d_confidence_logits=factor * self.d_confidence_logits,
            d_h0=factor * self.d_h0,
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(g).all() for _, g in self.items()) and bool(
            np.isfinite(self.d_h0).all()
        )

    def norm(self) -> float:
        return float(np.sqrt(sum(float((g * g).sum()) for _, g in self.items())))


def backward(
    record: CAForwardRecord, d_output: Union[DepthGrid, np.ndarray]
) -> ParameterGradients:
    """Gradients of sum(d_output * output) for a recorded context-aware run."""
    if not record.has_snapshots:
        raise ContractError("forward record lacks the per-step snapshots")
    dout = d_output.values if isinstance(d_output, DepthGrid) else np.asarray(d_output, np.float64)
    if dout.ndim == 2:
        dout = dout[:, :, None]
    if dout.shape != record.output.shape:
        raise DimensionError(f"cotangent {dout.shape} does not match output {record.output.shape}")

    config = record.config
    obs = record.obs
    h, w, _ = dout.shape
    alpha = record.weights.alpha()
    lam = record.weights.lambdas()
    h0 = record.h0.values

    if obs is not None:
        g = obs.confidence()[:, :, None]
        d_sparse = obs.values[:, :, None]
    d_g = np.zeros((h, w))
    d_h0 = np.zeros_like(h0)
    d_raw = np.zeros_like(record.raw.raw)
    d_alpha = np.zeros_like(alpha)
    d_lambda = np.zeros_like(lam)

    # final guided replacement
    if obs is not None:
        d_assembled = (1.0 - g) * dout
        d_g += ((d_sparse - record.assembled) * dout).sum(axis=2)
    else:
        d_assembled = dout

    for branch, kernel in zip(record.branches, record.kernels):
        ki = branch.kernel_index
        d_alpha[:, :, ki] = (branch.accumulator * d_assembled).sum(axis=2)
        d_acc = alpha[:, :, ki, None] * d_assembled

        offsets = kernel.offsets
        d_weights = np.zeros_like(kernel.neighbor_weights)
        d_center = np.zeros_like(kernel.center_weight)
        g_state = np.zeros_like(h0)
        for t in range(config.n_steps, 0, -1):
            ci = config.checkpoint_index(t)
            state = branch.states[t]
            if ci is not None:
                g_state = g_state + lam[:, :, ki, ci, None] * d_acc
                d_lambda[:, :, ki, ci] = (state * d_acc).sum(axis=2)
            if obs is not None:
                proposal = branch.proposals[t - 1]
                d_g += ((d_sparse - proposal) * g_state).sum(axis=2)
                g_prop = (1.0 - g) * g_state
            else:
                g_prop = g_state
            previous = branch.states[t - 1]
            d_center += (g_prop * h0).sum(axis=2)
            d_h0 += kernel.center_weight[:, :, None] * g_prop
            stack = gather_neighbors(previous, offsets)
            d_weights += np.einsum("hwc,hwmc->hwm", g_prop, stack)
            contrib = kernel.neighbor_weights[:, :, :, None] * g_prop[:, :, None, :]
            g_state = scatter_neighbors(contrib, offsets)
        d_h0 += g_state
        d_raw += normalize_backward(record.raw, kernel, d_weights, d_center)

    if obs is not None:
        s = sigmoid(obs.confidence_logits)
        d_conf = np.where(obs.mask, d_g * s * (1.0 - s), 0.0)
    else:
        d_conf = np.zeros((h, w))

    return ParameterGradients(
        d_raw_affinity=d_raw,
        d_alpha_logits=normalize_logits_backward(record.weights.alpha_logits, d_alpha, axis=-1),
        d_lambda_logits=normalize_logits_backward(record.weights.lambda_logits, d_lambda, axis=-1),
        d_confidence_logits=d_conf,
        d_h0=d_h0,
    )
