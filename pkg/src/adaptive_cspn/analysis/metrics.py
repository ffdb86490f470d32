"""深度补全误差指标：RMSE/MAE（毫米）与 iRMSE/iMAE（1/km）。"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from adaptive_cspn.core.errors import ContractError, DimensionError
from adaptive_cspn.core.grid import DepthGrid

# inverse depth of a prediction is taken on at least this many millimetres
MIN_PREDICTED_MM = 1.0


@dataclass(frozen=True)
class DepthMetrics:
    rmse: float
    mae: float
    irmse: float
    imae: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _plane(grid) -> np.ndarray:
    values = grid.values if isinstance(grid, DepthGrid) else np.asarray(grid, dtype=np.float64)
    return values[:, :, 0] if values.ndim == 3 else values


def depth_metrics(pred, gt, valid: Optional[np.ndarray] = None) -> DepthMetrics:
    """KITTI-style errors over ``valid`` pixels of channel 0.

    Depths are millimetres; inverse depth is 1000 / d_m = 1e6 / d_mm, in 1/km.
    """
    p = _plane(pred)
    g = _plane(gt)
    if p.shape != g.shape:
        raise DimensionError(f"prediction {p.shape} and ground truth {g.shape} differ")
    mask = np.ones(g.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if mask.shape != g.shape:
        raise DimensionError(f"valid mask {mask.shape} does not match {g.shape}")
    if not mask.any():
        raise ContractError("valid mask is empty")
    d = p[mask]
    d_star = g[mask]
    if (d_star <= 0).any():
        raise ContractError("ground truth depth must be positive on valid pixels")

    err = d - d_star
    inv_err = 1e6 / np.maximum(d, MIN_PREDICTED_MM) - 1e6 / d_star
    return DepthMetrics(
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=float(np.mean(np.abs(err))),
        irmse=float(np.sqrt(np.mean(inv_err**2))),
        imae=float(np.mean(np.abs(inv_err))),
    )
