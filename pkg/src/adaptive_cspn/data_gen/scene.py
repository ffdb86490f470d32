"""合成场景生成：分段平面深度图、稀疏采样与初始稠密深度。

Scenes are a tilted ground plane with axis-aligned fronto-parallel boxes,
giving sharp depth discontinuities at box borders. All depths are in
millimetres.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from sklearn.neighbors import KNeighborsRegressor

from adaptive_cspn.core.errors import ContractError
from adaptive_cspn.core.grid import DepthGrid, SparseObservations
from adaptive_cspn.data_gen.rng import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxSpec:
    """Obstacle rectangle at constant depth."""

    top: int
    left: int
    height: int
    width: int
    depth_mm: float


@dataclass(frozen=True)
class SamplingSpec:
    density: float = 0.05
    outlier_rate: float = 0.0
    outlier_scale: float = 0.5
    confidence_logit: float = 4.0
    knn_neighbors: int = 4


@dataclass(frozen=True)
class SceneSpec:
    """Scene descriptor: image size, ground plane, boxes and depth range."""

    height: int = 64
    width: int = 64
    d_min: float = 1000.0
    d_max: float = 40000.0
    plane_base_mm: float = 6000.0
    slope_x_mm: float = 15.0
    slope_y_mm: float = 150.0
    boxes: Tuple[BoxSpec, ...] = ()
    random_boxes: int = 2
    sampling: SamplingSpec = field(default_factory=SamplingSpec)

    def validate(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ContractError(f"scene size must be positive, got {self.height}x{self.width}")
        if not 0 < self.d_min < self.d_max:
            raise ContractError("depth range must satisfy 0 < d_min < d_max")
        if self.random_boxes < 0:
            raise ContractError("random_boxes must be non-negative")


@dataclass
class SyntheticScene:
    ground_truth: DepthGrid
    image_proxy: DepthGrid
    sparse: SparseObservations
    rng_seed: int
    spec: SceneSpec = field(default_factory=SceneSpec)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.ground_truth.height, self.ground_truth.width

    def valid_mask(self) -> np.ndarray:
        return self.ground_truth.values[:, :, 0] > 0


def ground_plane(spec: SceneSpec) -> np.ndarray:
    """Depth grows towards the top rows and drifts with the column."""
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    return spec.plane_base_mm + spec.slope_y_mm * (spec.height - 1 - ys) + spec.slope_x_mm * xs


def _random_box(spec: SceneSpec, rng: np.random.Generator) -> BoxSpec:
    bh = int(rng.integers(max(1, spec.height // 8), max(2, spec.height // 3) + 1))
    bw = int(rng.integers(max(1, spec.width // 8), max(2, spec.width // 3) + 1))
    top = int(rng.integers(0, max(1, spec.height - bh + 1)))
    left = int(rng.integers(0, max(1, spec.width - bw + 1)))
    depth = float(rng.uniform(spec.d_min, 0.6 * spec.plane_base_mm + 0.4 * spec.d_min))
    return BoxSpec(top, left, bh, bw, depth)


def edge_map(depth: np.ndarray, threshold_mm: float = 500.0) -> np.ndarray:
    """1.0 where a 4-neighbour differs by more than ``threshold_mm``."""
    edges = np.zeros(depth.shape, dtype=bool)
    dy = np.abs(np.diff(depth, axis=0)) > threshold_mm
    dx = np.abs(np.diff(depth, axis=1)) > threshold_mm
    edges[:-1, :] |= dy
    edges[1:, :] |= dy
    edges[:, :-1] |= dx
    edges[:, 1:] |= dx
    return edges.astype(np.float64)


def make_scene(spec: SceneSpec, seed: int, sample: bool = True) -> SyntheticScene:
    """Build the ground truth, its edge map and (optionally) the sparse samples."""
    spec.validate()
    rng = make_rng(seed, "scene")
    depth = ground_plane(spec)
    boxes = list(spec.boxes) + [_random_box(spec, rng) for _ in range(spec.random_boxes)]
    for box in boxes:
        depth[box.top : box.top + box.height, box.left : box.left + box.width] = box.depth_mm
    depth = np.clip(depth, spec.d_min, spec.d_max)

    if sample:
        s = spec.sampling
        sparse = sample_sparse(
            depth, s.density, s.outlier_rate, s.outlier_scale, seed, s.confidence_logit
        )
    else:
        sparse = SparseObservations(
            np.zeros_like(depth), np.zeros(depth.shape, dtype=bool), np.zeros_like(depth)
        )
    logger.debug("scene seed=%d size=%dx%d boxes=%d", seed, spec.height, spec.width, len(boxes))
    return SyntheticScene(
        ground_truth=DepthGrid(depth),
        image_proxy=DepthGrid(edge_map(depth)),
        sparse=sparse,
        rng_seed=int(seed),
        spec=spec,
    )


def sample_sparse(
    ground_truth,
    density: float,
    outlier_rate: float = 0.0,
    outlier_scale: float = 0.5,
    seed: int = 0,
    confidence_logit: float = 4.0,
) -> SparseObservations:
    """Bernoulli(density) samples of the ground truth, some scaled into outliers."""
    if not 0.0 < density <= 1.0:
        raise ContractError(f"density must lie in (0, 1], got {density}")
    if not 0.0 <= outlier_rate < 1.0:
        raise ContractError(f"outlier_rate must lie in [0, 1), got {outlier_rate}")
    if not 0.0 <= outlier_scale < 1.0:
        raise ContractError(f"outlier_scale must lie in [0, 1), got {outlier_scale}")
    depth = ground_truth.values[:, :, 0] if isinstance(ground_truth, DepthGrid) else np.asarray(
        ground_truth, dtype=np.float64
    )
    rng = make_rng(seed, "sampling")
    mask = (rng.random(depth.shape) < density) & (depth > 0)
    outliers = mask & (rng.random(depth.shape) < outlier_rate)
    factors = rng.uniform(1.0 - outlier_scale, 1.0 + outlier_scale, size=depth.shape)
    values = np.where(outliers, depth * factors, depth)
    logits = np.where(mask, confidence_logit, 0.0)
    return SparseObservations(np.where(mask, values, 0.0), mask, logits)


def densify_sparse(sparse: SparseObservations, neighbors: int = 4) -> DepthGrid:
    """Inverse-distance k-nearest-neighbour fill of the sparse depth (initial H_0)."""
    ys, xs = np.nonzero(sparse.mask)
    if ys.size == 0:
        raise ContractError("cannot densify an empty sparse map")
    model = KNeighborsRegressor(n_neighbors=min(int(neighbors), ys.size), weights="distance")
    model.fit(np.column_stack([ys, xs]).astype(np.float64), sparse.values[ys, xs])
    h, w = sparse.shape
    grid = np.mgrid[0:h, 0:w].reshape(2, -1).T.astype(np.float64)
    dense = model.predict(grid).reshape(h, w)
    # sampled pixels keep their exact values
    dense = np.where(sparse.mask, sparse.values, dense)
    return DepthGrid(dense)


def outlier_fraction(sparse: SparseObservations, ground_truth: DepthGrid, tol: float = 1e-9) -> float:
    """Share of valid samples that differ from the ground truth."""
    if not sparse.mask.any():
        return 0.0
    gt = ground_truth.values[:, :, 0]
    diff = np.abs(sparse.values - gt) > tol * np.maximum(gt, 1.0)
    return float(diff[sparse.mask].mean())


def default_scene_spec(
    height: int = 64, width: int = 64, density: float = 0.05, outlier_rate: float = 0.0, **kwargs
) -> SceneSpec:
    sampling = SamplingSpec(density=density, outlier_rate=outlier_rate)
    return SceneSpec(height=height, width=width, sampling=sampling, **kwargs)


def scene_with_sampling(scene: SyntheticScene, sampling: SamplingSpec, seed: Optional[int] = None) -> SyntheticScene:
    """Same ground truth, resampled sparse observations."""
    sparse = sample_sparse(
        scene.ground_truth,
        sampling.density,
        sampling.outlier_rate,
        sampling.outlier_scale,
        scene.rng_seed if seed is None else seed,
        sampling.confidence_logit,
    )
    return SyntheticScene(scene.ground_truth, scene.image_proxy, sparse, scene.rng_seed, scene.spec)
