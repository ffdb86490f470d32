"""Parameter-set directories: a ``params.yaml`` manifest next to CSPF grids.

Layout::

    params.yaml              manifest (format, version, shape, kernels, checkpoints)
    raw_affinity.cspf        (H, W, k_max^2 - 1)
    alpha_logits.cspf        (H, W, K)
    lambda_logits.cspf       (H, W, K * T), kernel-major
    confidence_logits.cspf   (H, W, 1)
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Tuple, TypeVar

import numpy as np
import yaml

from adaptive_cspn.core.errors import CSPNError
from adaptive_cspn.core.grid import AffinityField
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig
from adaptive_cspn.formats.rasters import (
    PathLike,
    atomic_write_text,
    read_float_raster,
    write_float_raster,
)
from adaptive_cspn.training.gradients import FAMILIES, ModelParameters

logger = logging.getLogger(__name__)

T = TypeVar("T")

MANIFEST = "params.yaml"
PARAMS_FORMAT = "adaptive-cspn-params"
PARAMS_VERSION = 1


class ManifestError(CSPNError, ValueError):
    """Missing or inconsistent parameter manifest."""


def weights_to_array(weights: AssemblyWeights) -> np.ndarray:
    """Alpha logits followed by the flattened lambda logits, (H, W, K + K*T)."""
    h, w = weights.shape
    lam = weights.lambda_logits.reshape(h, w, -1)
    return np.concatenate([weights.alpha_logits, lam], axis=2)


def weights_from_array(values: np.ndarray, config: PropagationConfig) -> AssemblyWeights:
    values = np.asarray(values, dtype=np.float64)
    k, t = config.num_kernels, config.num_checkpoints
    if values.ndim != 3 or values.shape[2] != k + k * t:
        raise ManifestError(
            f"weights grid needs {k + k * t} channels for K={k}, T={t}, got shape {values.shape}"
        )
    h, w, _ = values.shape
    return AssemblyWeights(values[:, :, :k].copy(), values[:, :, k:].reshape(h, w, k, t))


def save_params(directory: PathLike, params: ModelParameters, config: PropagationConfig) -> Path:
    """Write every parameter family and the manifest; returns the manifest path."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    h, w = params.raw.shape
    files = {name: f"{name}.cspf" for name in FAMILIES}
    for name in FAMILIES:
        values = params.family(name)
        if name == "lambda_logits":
            values = values.reshape(h, w, -1)
        write_float_raster(root / files[name], values)
    manifest = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "height": h,
        "width": w,
        "kernel_sizes": list(config.kernel_sizes),
        "iteration_checkpoints": list(config.iteration_checkpoints),
        "files": files,
    }
    target = atomic_write_text(root / MANIFEST, yaml.safe_dump(manifest, sort_keys=False))
    logger.info("saved parameters to %s", root)
    return target


def read_listed_file(root: Path, filename: object, reader: Callable[[Path], T]) -> T:
    """读取清单中列出的文件；缺失或不可读时抛出 ManifestError。"""
    if not isinstance(filename, str) or not filename:
        raise ManifestError(f"manifest in {root} lists an invalid file name {filename!r}")
    path = root / filename
    if not path.is_file():
        raise ManifestError(f"{root} is missing {filename}")
    try:
        return reader(path)
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc


def load_params(directory: PathLike) -> Tuple[ModelParameters, PropagationConfig]:
    root = Path(directory)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise ManifestError(f"no {MANIFEST} in {root}")
    try:
        manifest = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ManifestError(f"unreadable manifest {manifest_path}: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != PARAMS_FORMAT:
        raise ManifestError(f"{manifest_path} is not a parameter manifest")
    if manifest.get("version") != PARAMS_VERSION:
        raise ManifestError(f"unsupported parameter manifest version {manifest.get('version')}")

    try:
        config = PropagationConfig(
            kernel_sizes=tuple(manifest["kernel_sizes"]),
            iteration_checkpoints=tuple(manifest["iteration_checkpoints"]),
        )
        h, w = int(manifest["height"]), int(manifest["width"])
    except KeyError as exc:
        raise ManifestError(f"{manifest_path} has no {exc.args[0]!r} entry") from exc
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"invalid entry in {manifest_path}: {exc}") from exc
    files = manifest.get("files") or {}
    if not isinstance(files, dict):
        raise ManifestError(f"'files' in {manifest_path} must be a mapping")
    grids = {}
    for name in FAMILIES:
        if name not in files:
            raise ManifestError(f"manifest does not list {name}")
        grid = read_listed_file(root, files[name], read_float_raster)
        if grid.shape[:2] != (h, w):
            raise ManifestError(f"{files[name]} is {grid.shape[:2]}, manifest says {(h, w)}")
        grids[name] = grid

    k, t = config.num_kernels, config.num_checkpoints
    try:
        params = ModelParameters(
            raw=AffinityField(grids["raw_affinity"]),
            weights=AssemblyWeights(
                grids["alpha_logits"], grids["lambda_logits"].reshape(h, w, k, t)
            ),
            confidence_logits=grids["confidence_logits"][:, :, 0],
        )
    except ValueError as exc:
        raise ManifestError(f"parameter grids do not fit the manifest: {exc}") from exc
    if params.raw.kernel_max != config.k_max:
        raise ManifestError(
            f"affinity window {params.raw.kernel_max} does not match k_max {config.k_max}"
        )
    return params, config
