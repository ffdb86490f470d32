"""Affinity normalisation and the single-kernel equivalent of a kernel mixture.

Raw logits are divided by the L1 norm over the valid neighbours of the
central k x k sub-window; the centre weight takes the remainder so that
centre + sum(neighbours) = 1. Out-of-image neighbours are absent and carry
weight 0. A pixel whose valid logits are all zero gets the identity-to-H_0
kernel (centre 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from adaptive_cspn.core.errors import ConfigurationError, ContractError, DimensionError
from adaptive_cspn.core.grid import (
    AffinityField,
    neighbor_offsets,
    neighbor_validity,
    window_indices,
)
from adaptive_cspn.core.params import PropagationConfig


@dataclass(frozen=True)
class NormalizedKernel:
    """Per-pixel propagation kernel of one size.

    ``neighbor_weights`` is (H, W, k*k - 1) in row-major offset order,
    ``center_weight`` is (H, W). ``l1_norm`` keeps sum |raw| per pixel for
    the backward pass (sum |kappa| for a mixed kernel).
    """

    size: int
    neighbor_weights: np.ndarray
    center_weight: np.ndarray
    l1_norm: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return neighbor_offsets(self.size)

    @property
    def shape(self) -> tuple:
        return self.center_weight.shape

    @property
    def valid(self) -> np.ndarray:
        h, w = self.center_weight.shape
        return neighbor_validity(h, w, self.size)

    def embed(self, kernel_max: int) -> np.ndarray:
        """Neighbour weights placed into the ``kernel_max`` window layout."""
        h, w = self.center_weight.shape
        out = np.zeros((h, w, kernel_max * kernel_max - 1))
        out[:, :, window_indices(self.size, kernel_max)] = self.neighbor_weights
        return out


def _check_kernel(raw: AffinityField, k: int, config: Optional[PropagationConfig]) -> None:
    if config is not None and k not in config.kernel_sizes:
        raise ConfigurationError(f"kernel size {k} is not one of {config.kernel_sizes}")
    if k < 3 or k % 2 == 0 or k > raw.kernel_max:
        raise ConfigurationError(
            f"kernel size {k} is not an odd size within the affinity window {raw.kernel_max}"
        )


def masked_logits(raw: AffinityField, k: int) -> np.ndarray:
    """Raw logits of the k x k sub-window with out-of-image slots zeroed."""
    h, w = raw.shape
    sub = raw.raw[:, :, window_indices(k, raw.kernel_max)]
    return np.where(neighbor_validity(h, w, k), sub, 0.0)


def normalize(
    raw: AffinityField, k: int, config: Optional[PropagationConfig] = None
) -> NormalizedKernel:
    """kappa_x(x_n) = raw / sum |raw| over valid neighbours; centre = 1 - sum kappa."""
    _check_kernel(raw, int(k), config)
    k = int(k)
    v = masked_logits(raw, k)
    norm = np.abs(v).sum(axis=2)
    safe = np.where(norm > 0, norm, 1.0)
    weights = np.where(norm[:, :, None] > 0, v / safe[:, :, None], 0.0)
    center = 1.0 - weights.sum(axis=2)
    return NormalizedKernel(size=k, neighbor_weights=weights, center_weight=center, l1_norm=norm)


def normalize_backward(
    raw: AffinityField, kernel: NormalizedKernel, d_weights: np.ndarray, d_center: np.ndarray
) -> np.ndarray:
    """Gradient on the full raw field from gradients on one normalised kernel.

    The centre weight depends on the neighbours through 1 - sum(kappa); the
    sign subgradient of |raw| at 0 is 0, as is the gradient of an all-zero
    window.
    """
    v = masked_logits(raw, kernel.size)
    total = d_weights - d_center[:, :, None]
    norm = kernel.l1_norm
    safe = np.where(norm > 0, norm, 1.0)
    inner = (total * v).sum(axis=2)
    dv = total / safe[:, :, None] - np.sign(v) * (inner / (safe * safe))[:, :, None]
    dv = np.where((norm[:, :, None] > 0) & kernel.valid, dv, 0.0)
    out = np.zeros_like(raw.raw)
    out[:, :, window_indices(kernel.size, raw.kernel_max)] = dv
    return out


def effective_kernel(
    raw: AffinityField, alpha: np.ndarray, config: PropagationConfig
) -> NormalizedKernel:
    """k_max kernel equal to the alpha-weighted sum of every branch kernel.

    ``alpha`` is a normalised vector over K or a per-pixel (H, W, K) field.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    h, w = raw.shape
    if alpha.ndim == 1:
        alpha = np.broadcast_to(alpha, (h, w, alpha.shape[0]))
    if alpha.shape != (h, w, config.num_kernels):
        raise DimensionError(
            f"alpha shape {alpha.shape} does not match ({h}, {w}, {config.num_kernels})"
        )
    if (alpha <= 0).any() or not np.allclose(alpha.sum(axis=2), 1.0, rtol=0.0, atol=1e-9):
        raise ContractError("alpha must be positive and sum to 1 at every pixel")
    if config.k_max != raw.kernel_max:
        raise ConfigurationError(
            f"affinity window {raw.kernel_max} does not match k_max {config.k_max}"
        )

    weights = np.zeros((h, w, config.k_max * config.k_max - 1))
    center = np.zeros((h, w))
    for ki, k in enumerate(config.kernel_sizes):
        kernel = normalize(raw, k, config)
        weights += alpha[:, :, ki : ki + 1] * kernel.embed(config.k_max)
        center += alpha[:, :, ki] * kernel.center_weight
    return NormalizedKernel(
        size=config.k_max,
        neighbor_weights=weights,
        center_weight=center,
        l1_norm=np.abs(weights).sum(axis=2),
    )
