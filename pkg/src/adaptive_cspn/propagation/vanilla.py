"""Vanilla CSPN: one propagation step, hard replacement and the N-step loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from adaptive_cspn.core.errors import ContractError, DimensionError
from adaptive_cspn.core.grid import AffinityField, DepthGrid, SparseObservations, gather_neighbors
from adaptive_cspn.core.params import PropagationConfig
from adaptive_cspn.engine.counters import OpCounter
from adaptive_cspn.propagation.affinity import NormalizedKernel, normalize

logger = logging.getLogger(__name__)


@dataclass
class PropagationState:
    """Anchor H_0, current state H_t and the number of steps taken."""

    h0: DepthGrid
    h_current: DepthGrid
    step_index: int = 0

    def __post_init__(self) -> None:
        if self.h0.shape != self.h_current.shape:
            raise DimensionError(f"h0 {self.h0.shape} and h_t {self.h_current.shape} differ")
        if self.step_index < 0:
            raise ContractError("step_index must be non-negative")

    @classmethod
    def start(cls, h0: DepthGrid) -> "PropagationState":
        return cls(h0=h0, h_current=h0.copy(), step_index=0)

    def advance(
        self,
        kernel: NormalizedKernel,
        obs: Optional[SparseObservations] = None,
        counter: Optional[OpCounter] = None,
    ) -> "PropagationState":
        """方法说明：执行一步传播（可选硬替换），返回 step_index 加一的新状态。"""
        out = cspn_step(self, kernel, counter)
        if obs is not None:
            out = replace(out, obs)
        return PropagationState(h0=self.h0, h_current=out, step_index=self.step_index + 1)


def count_step(kernel: NormalizedKernel, channels: int, counter: Optional[OpCounter]) -> None:
    """Record one dense step: valid window slots plus the centre, per channel."""
    if counter is None:
        return
    h, w = kernel.shape
    pairs = int(kernel.valid.sum()) + h * w
    counter.add_step(pairs * channels, h * w * kernel.size * kernel.size * channels)


def weighted_reduce(
    center: np.ndarray, anchor: np.ndarray, weights: np.ndarray, stack: np.ndarray
) -> np.ndarray:
    """centre * anchor + sum_n weights[..., n] * stack[..., n, :], summed in slot order.

    All propagation paths share this reduction order, so dense and gathered
    evaluations agree bitwise.
    """
    out = center[..., None] * anchor
    for n in range(weights.shape[-1]):
        out = out + weights[..., n, None] * stack[..., n, :]
    return out


def step_values(h0: np.ndarray, ht: np.ndarray, kernel: NormalizedKernel) -> np.ndarray:
    """out = centre * H_0 + sum_n kappa_n * H_t[x + n], reading H_t as a snapshot."""
    stack = gather_neighbors(ht, kernel.offsets)
    return weighted_reduce(kernel.center_weight, h0, kernel.neighbor_weights, stack)


def cspn_step(
    state: PropagationState, kernel: NormalizedKernel, counter: Optional[OpCounter] = None
) -> DepthGrid:
    """One Jacobi propagation step."""
    if kernel.shape != state.h0.shape[:2]:
        raise DimensionError(f"kernel {kernel.shape} does not match grid {state.h0.shape[:2]}")
    out = step_values(state.h0.values, state.h_current.values, kernel)
    count_step(kernel, state.h0.channels, counter)
    return DepthGrid(out)


def replace_values(values: np.ndarray, obs: SparseObservations) -> np.ndarray:
    return np.where(obs.mask[:, :, None], obs.values[:, :, None], values)


def replace(grid: DepthGrid, obs: SparseObservations) -> DepthGrid:
    """Hard replacement: out = (1 - m) * grid + m * d^s, broadcast over channels."""
    if obs.shape != grid.shape[:2]:
        raise DimensionError(f"observations {obs.shape} do not match grid {grid.shape[:2]}")
    return DepthGrid(replace_values(grid.values, obs))


def run_cspn(
    h0: DepthGrid,
    raw: AffinityField,
    obs: Optional[SparseObservations],
    k: int,
    n_steps: int,
    counter: Optional[OpCounter] = None,
    config: Optional[PropagationConfig] = None,
) -> DepthGrid:
    """Propagate ``n_steps`` times with kernel ``k``, replacing after each step."""
    if n_steps < 0:
        raise ContractError(f"n_steps must be non-negative, got {n_steps}")
    if raw.shape != h0.shape[:2]:
        raise DimensionError(f"affinity {raw.shape} does not match grid {h0.shape[:2]}")
    if obs is not None and obs.shape != h0.shape[:2]:
        raise DimensionError(f"observations {obs.shape} do not match grid {h0.shape[:2]}")

    kernel = normalize(raw, k, config)
    state = PropagationState.start(h0)
    while state.step_index < n_steps:
        state = state.advance(kernel, obs, counter)
    logger.debug("cspn run: kernel=%d steps=%d", k, n_steps)
    return state.h_current
