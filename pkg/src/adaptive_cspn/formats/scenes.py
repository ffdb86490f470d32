"""场景目录读写：真值、稀疏深度、掩码、初始稠密深度与置信度。"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict

import numpy as np
import yaml

from adaptive_cspn.config.loader import ConfigError, scene_spec_as_dict, scene_spec_from_dict
from adaptive_cspn.core.grid import DepthGrid, SparseObservations
from adaptive_cspn.data_gen.scene import SyntheticScene, densify_sparse, edge_map
from adaptive_cspn.formats.params import ManifestError, read_listed_file
from adaptive_cspn.formats.rasters import (
    PathLike,
    atomic_write_text,
    read_depth_raster,
    read_float_raster,
    read_mask_raster,
    write_depth_raster,
    write_float_raster,
    write_mask_raster,
)

logger = logging.getLogger(__name__)

SCENE_MANIFEST = "scene.yaml"
SCENE_FILES: Dict[str, str] = {
    "ground_truth": "ground_truth.pgm",
    "sparse": "sparse.pgm",
    "mask": "mask.pgm",
    "h0": "h0.pgm",
    "confidence": "confidence.cspf",
}


def save_scene(directory: PathLike, scene: SyntheticScene) -> Dict[str, Path]:
    """Write the scene rasters plus ``scene.yaml`` (seed and descriptor)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    sparse = scene.sparse
    h0 = densify_sparse(sparse, scene.spec.sampling.knn_neighbors)
    written = {
        "ground_truth": write_depth_raster(root / SCENE_FILES["ground_truth"], scene.ground_truth),
        "sparse": write_depth_raster(root / SCENE_FILES["sparse"], sparse.values, sparse.mask),
        "mask": write_mask_raster(root / SCENE_FILES["mask"], sparse.mask),
        "h0": write_depth_raster(root / SCENE_FILES["h0"], h0),
        "confidence": write_float_raster(
            root / SCENE_FILES["confidence"], sparse.confidence_logits
        ),
    }
    manifest = {"seed": int(scene.rng_seed), "spec": scene_spec_as_dict(scene.spec)}
    written["manifest"] = atomic_write_text(
        root / SCENE_MANIFEST, yaml.safe_dump(manifest, sort_keys=False)
    )
    logger.info("scene written to %s (%d samples)", root, int(sparse.mask.sum()))
    return written


def load_scene(directory: PathLike) -> SyntheticScene:
    """Rebuild a scene from its directory; depths come back at raster precision."""
    root = Path(directory)
    manifest_path = root / SCENE_MANIFEST
    if not manifest_path.is_file():
        raise ManifestError(f"no {SCENE_MANIFEST} in {root}")
    try:
        manifest = yaml.safe_load(manifest_path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ManifestError(f"unreadable scene manifest {manifest_path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ManifestError(f"{manifest_path} is not a scene manifest")
    try:
        spec = scene_spec_from_dict(manifest.get("spec") or {})
        seed = int(manifest.get("seed", 0))
    except ConfigError as exc:
        raise ManifestError(f"invalid scene descriptor in {manifest_path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"invalid entry in {manifest_path}: {exc}") from exc

    gt, _ = read_listed_file(root, SCENE_FILES["ground_truth"], read_depth_raster)
    sparse_depth, sparse_valid = read_listed_file(root, SCENE_FILES["sparse"], read_depth_raster)
    mask = read_listed_file(root, SCENE_FILES["mask"], read_mask_raster)
    confidence_path = root / SCENE_FILES["confidence"]
    if confidence_path.is_file():
        logits = read_listed_file(root, SCENE_FILES["confidence"], read_float_raster)[:, :, 0]
    else:
        logits = np.full(mask.shape, spec.sampling.confidence_logit)
    if not (gt.shape[:2] == sparse_valid.shape == mask.shape == logits.shape):
        raise ManifestError(f"scene rasters in {root} disagree on their size")
    mask = mask & sparse_valid
    sparse = SparseObservations(sparse_depth.values[:, :, 0], mask, np.where(mask, logits, 0.0))
    return SyntheticScene(
        ground_truth=gt,
        image_proxy=DepthGrid(edge_map(gt.values[:, :, 0])),
        sparse=sparse,
        rng_seed=seed,
        spec=spec,
    )
