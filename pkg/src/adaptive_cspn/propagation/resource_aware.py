"""Resource-aware propagation: hard per-pixel (kernel, iterations) selection.

Pixel x runs kernel k*_x for t*_x steps and then freezes; frozen pixels stay
readable by neighbours that are still active and no longer receive
replacement. ``run_ra_cspn_naive`` evaluates every kernel densely and picks
per pixel; ``run_ra_cspn_scheduled`` groups pixels into one region per
kernel size and runs each step as a regional im2col gather, a weighted
column reduction and a scatter into the write buffer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from adaptive_cspn.core.errors import ContractError, DimensionError
from adaptive_cspn.core.grid import (
    AffinityField,
    DepthGrid,
    SparseObservations,
    check_same_plane,
)
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig
from adaptive_cspn.engine.counters import OpCounter
from adaptive_cspn.propagation.affinity import NormalizedKernel, normalize
from adaptive_cspn.propagation.vanilla import step_values, weighted_reduce

logger = logging.getLogger(__name__)

Configuration = Tuple[int, int]


@dataclass
class SelectionMap:
    """Per-pixel kernel size ``k_star`` and iteration count ``t_star``, both (H, W)."""

    k_star: np.ndarray
    t_star: np.ndarray

    def __post_init__(self) -> None:
        self.k_star = np.array(self.k_star, dtype=np.int64)
        self.t_star = np.array(self.t_star, dtype=np.int64)
        if self.k_star.ndim != 2 or self.k_star.shape != self.t_star.shape:
            raise DimensionError("k_star and t_star must be (H, W) arrays of one shape")

    @classmethod
    def uniform(cls, height: int, width: int, kernel_size: int, iterations: int) -> "SelectionMap":
        return cls(
            np.full((height, width), kernel_size, dtype=np.int64),
            np.full((height, width), iterations, dtype=np.int64),
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.k_star.shape  # type: ignore[return-value]

    def validate(self, config: PropagationConfig) -> None:
        if not np.isin(self.k_star, config.kernel_sizes).all():
            raise ContractError(f"selected kernel sizes must be in {config.kernel_sizes}")
        if not np.isin(self.t_star, config.iteration_checkpoints).all():
            raise ContractError(
                f"selected iterations must be in {config.iteration_checkpoints}"
            )

    def histogram(self) -> Dict[int, int]:
        sizes, counts = np.unique(self.k_star, return_counts=True)
        return {int(k): int(c) for k, c in zip(sizes, counts)}

    def pixel_costs(self, config: PropagationConfig) -> np.ndarray:
        """c_x = (k*_x)^2 t*_x / (N k_max^2)."""
        return self.k_star.astype(np.float64) ** 2 * self.t_star / config.cost_normalizer


def select_configuration(
    weights: AssemblyWeights, config: PropagationConfig, apply_floor: bool = True
) -> SelectionMap:
    """k* = argmax alpha, t* = argmax lambda(k*, .); ties go to the smaller value.

    sigmoid is monotone and the normalisation shares one denominator, so the
    argmax of the logits is the argmax of the normalised weights. With
    ``apply_floor`` every choice is raised to the configured minimum.
    """
    weights.check_config(config)
    ki = np.argmax(weights.alpha_logits, axis=2)
    lam = np.take_along_axis(weights.lambda_logits, ki[:, :, None, None], axis=2)[:, :, 0, :]
    ti = np.argmax(lam, axis=2)
    k_star = np.asarray(config.kernel_sizes, dtype=np.int64)[ki]
    t_star = np.asarray(config.iteration_checkpoints, dtype=np.int64)[ti]
    if apply_floor:
        k_floor, t_floor = config.floor_configuration()
        k_star = np.maximum(k_star, k_floor)
        t_star = np.maximum(t_star, t_floor)
    return SelectionMap(k_star, t_star)


def _check_run(
    h0: DepthGrid,
    raw: AffinityField,
    obs: Optional[SparseObservations],
    selection: SelectionMap,
    config: PropagationConfig,
) -> None:
    shapes = [h0.shape, raw.raw.shape, selection.shape]
    if obs is not None:
        shapes.append(obs.shape)
    check_same_plane(*shapes)
    selection.validate(config)


def run_ra_cspn_naive(
    h0: DepthGrid,
    raw: AffinityField,
    obs: Optional[SparseObservations],
    selection: SelectionMap,
    config: PropagationConfig,
    counter: Optional[OpCounter] = None,
) -> DepthGrid:
    """Reference resource-aware run: dense step per kernel, then per-pixel pick."""
    _check_run(h0, raw, obs, selection, config)
    h, w = selection.shape
    channels = h0.channels
    sizes = sorted(set(int(k) for k in np.unique(selection.k_star)))
    kernels = {k: normalize(raw, k, config) for k in sizes}
    anchor = h0.values
    current = anchor.copy()
    n_steps = int(selection.t_star.max())
    for step in range(1, n_steps + 1):
        active = selection.t_star >= step
        nxt = current.copy()
        mult_adds = 0
        for k in sizes:
            proposal = step_values(anchor, current, kernels[k])
            chosen = active & (selection.k_star == k)
            nxt[chosen] = proposal[chosen]
            mult_adds += _region_mult_adds(kernels[k], chosen, channels)
        if obs is not None:
            hit = active & obs.mask
            nxt[hit] = obs.values[hit][:, None]
        current = nxt
        if counter is not None:
            dense = sum(k * k for k in sizes) * h * w * channels
            counter.add_step(mult_adds, dense)
    return DepthGrid(current)


def _region_mult_adds(kernel: NormalizedKernel, members, channels: int) -> int:
    """In-image window slots plus the centre for every member pixel."""
    valid = kernel.valid[members]
    return int((valid.sum() + valid.shape[0]) * channels)


@dataclass
class Region:
    """Pixels that selected one kernel size, with their stop step."""

    kernel_size: int
    ys: np.ndarray
    xs: np.ndarray
    t_star: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ys.shape[0])

    def active_at(self, step: int) -> np.ndarray:
        """Member flags for pixels still running at ``step`` (1-based)."""
        return self.t_star >= step


@dataclass
class RegionBatch:
    """One region per distinct selected kernel size."""

    regions: List[Region]
    shape: Tuple[int, int]

    @property
    def n_steps(self) -> int:
        return max((int(r.t_star.max()) for r in self.regions if r.size), default=0)

    def region_for(self, kernel_size: int) -> Optional[Region]:
        return next((r for r in self.regions if r.kernel_size == kernel_size), None)

    def active_mask(self, step: int) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for region in self.regions:
            live = region.active_at(step)
            mask[region.ys[live], region.xs[live]] = True
        return mask

    def counts(self) -> Dict[int, int]:
        return {r.kernel_size: r.size for r in self.regions}


def build_regions(selection: SelectionMap) -> RegionBatch:
    """Partition pixels by selected kernel size, row-major inside each region."""
    regions = []
    for k in np.unique(selection.k_star):
        ys, xs = np.nonzero(selection.k_star == k)
        regions.append(Region(int(k), ys, xs, selection.t_star[ys, xs]))
    return RegionBatch(regions=regions, shape=selection.shape)


def im2col_region(
    current: np.ndarray, anchor: np.ndarray, ys: np.ndarray, xs: np.ndarray, kernel: NormalizedKernel
) -> np.ndarray:
    """Column matrix (k*k, |R|, C) of the region windows.

    Row 0 holds the anchor value of each pixel (the centre slot reads H_0);
    rows 1.. hold the neighbours of H_t in row-major offset order, zero
    outside the image.
    """
    h, w, c = current.shape
    r = kernel.size // 2
    padded = np.zeros((h + 2 * r, w + 2 * r, c), dtype=current.dtype)
    padded[r : r + h, r : r + w] = current
    offsets = kernel.offsets
    rows = ys[None, :] + r + offsets[:, 0, None]
    cols = xs[None, :] + r + offsets[:, 1, None]
    out = np.empty((offsets.shape[0] + 1, ys.shape[0], c), dtype=current.dtype)
    out[0] = anchor[ys, xs]
    out[1:] = padded[rows, cols]
    return out


def region_step(
    columns: np.ndarray, kernel: NormalizedKernel, ys: np.ndarray, xs: np.ndarray
) -> np.ndarray:
    """Weighted reduction of one region's column matrix, (|R|, C)."""
    center = kernel.center_weight[ys, xs]
    weights = kernel.neighbor_weights[ys, xs]
    stack = np.moveaxis(columns[1:], 0, 1)
    return weighted_reduce(center, columns[0], weights, stack)


def run_ra_cspn_scheduled(
    h0: DepthGrid,
    raw: AffinityField,
    obs: Optional[SparseObservations],
    selection: SelectionMap,
    config: PropagationConfig,
    counter: Optional[OpCounter] = None,
) -> DepthGrid:
    """Regional execution of the resource-aware run; frozen pixels copy through."""
    _check_run(h0, raw, obs, selection, config)
    batch = build_regions(selection)
    kernels = {r.kernel_size: normalize(raw, r.kernel_size, config) for r in batch.regions}
    channels = h0.channels
    anchor = h0.values
    current = anchor.copy()
    for step in range(1, batch.n_steps + 1):
        nxt = current.copy()
        mult_adds = 0
        live_elements = 0
        for region in batch.regions:
            live = region.active_at(step)
            if not live.any():
                continue
            ys, xs = region.ys[live], region.xs[live]
            kernel = kernels[region.kernel_size]
            columns = im2col_region(current, anchor, ys, xs, kernel)
            nxt[ys, xs] = region_step(columns, kernel, ys, xs)
            if obs is not None:
                hit = obs.mask[ys, xs]
                nxt[ys[hit], xs[hit]] = obs.values[ys[hit], xs[hit]][:, None]
            mult_adds += _region_mult_adds(kernel, (ys, xs), channels)
            live_elements += columns.size
        current = nxt
        if counter is not None and live_elements:
            counter.add_step(mult_adds, live_elements)
    logger.debug("ra run: regions=%s steps=%d", batch.counts(), batch.n_steps)
    return DepthGrid(current)


def pareto_frontier(points: Sequence[Configuration]) -> List[Configuration]:
    """Configurations not dominated in both kernel size and iteration count.

    ``a`` dominates ``b`` when it is at least as large in both coordinates
    and differs from it. The result is ordered by iteration count.
    """
    unique = sorted(set((int(k), int(t)) for k, t in points), key=lambda p: (p[1], p[0]))
    frontier = []
    for i, (k, t) in enumerate(unique):
        dominated = False
        for j, (ok, ot) in enumerate(unique):
            if j == i:
                continue
            if ok >= k and ot >= t:
                dominated = True
                break
        if not dominated:
            frontier.append((k, t))
    return frontier


def configuration_costs(config: PropagationConfig) -> Dict[Configuration, Tuple[float, float]]:
    """(latency, memory) normalised cost of every configured (k, t)."""
    k_max2 = config.k_max * config.k_max
    return {
        (k, t): (k * k * t / config.cost_normalizer, k * k / k_max2)
        for k in config.kernel_sizes
        for t in config.iteration_checkpoints
    }


def rounding_target(
    config: PropagationConfig,
    latency_budget: float,
    memory_budget: Optional[float] = None,
    ceiling: Optional[float] = None,
) -> Configuration:
    """Feasible frontier configuration with the most iterations, then the larger kernel.

    ``ceiling`` caps the latency cost of the candidates, so a pixel is never
    moved to a configuration dearer than the one it leaves. Falls back to the
    cheapest configuration when nothing fits.
    """
    costs = configuration_costs(config)
    cap = latency_budget if ceiling is None else min(latency_budget, ceiling)
    feasible = [
        cfg
        for cfg, (lat, mem) in costs.items()
        if lat <= cap + 1e-12
        and (memory_budget is None or mem <= memory_budget + 1e-12)
    ]
    if not feasible:
        return min(costs, key=lambda cfg: (costs[cfg][0], cfg[0], cfg[1]))
    frontier = pareto_frontier(feasible)
    return max(frontier, key=lambda cfg: (cfg[1], cfg[0]))


def budget_round(
    selection: SelectionMap,
    config: PropagationConfig,
    latency_budget: float,
    memory_budget: Optional[float] = None,
) -> SelectionMap:
    """Reassign every pixel that breaks a budget to its rounding target.

    The target depends on the pixel's current configuration: it is the best
    feasible frontier point whose latency cost does not exceed the pixel's own.
    Pixels within both budgets keep their selection.
    """
    if latency_budget is None or not latency_budget > 0:
        raise ContractError(f"latency budget must be positive, got {latency_budget}")
    if memory_budget is not None and not memory_budget > 0:
        raise ContractError(f"memory budget must be positive, got {memory_budget}")
    selection.validate(config)
    costs = selection.pixel_costs(config)
    violating = costs > latency_budget + 1e-12
    if memory_budget is not None:
        mem = selection.k_star.astype(np.float64) ** 2 / (config.k_max * config.k_max)
        violating |= mem > memory_budget + 1e-12
    k_star = selection.k_star.copy()
    t_star = selection.t_star.copy()
    moves: Dict[Configuration, Configuration] = {}
    pairs = np.stack([selection.k_star[violating], selection.t_star[violating]], axis=1)
    for k, t in np.unique(pairs, axis=0):
        source = (int(k), int(t))
        target = rounding_target(
            config, latency_budget, memory_budget, ceiling=k * k * t / config.cost_normalizer
        )
        members = violating & (selection.k_star == k) & (selection.t_star == t)
        k_star[members], t_star[members] = target
        moves[source] = target
    logger.debug(
        "budget rounding: %d of %d pixels moved %s",
        int(violating.sum()),
        violating.size,
        moves,
    )
    return SelectionMap(k_star, t_star)
