"""Grid value types and the neighbour gather/scatter primitives.

All propagation code works on float64 arrays laid out (H, W, C). The
affinity field stores one logit per non-centre neighbour of the largest
kernel window in row-major order; smaller kernels read the central
sub-window of that layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from adaptive_cspn.core.errors import ConfigurationError, DimensionError
from adaptive_cspn.core.params import sigmoid


@dataclass
class DepthGrid:
    """H x W x C field of finite values (millimetres for depth)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or min(values.shape) < 1:
            raise DimensionError(f"grid values must be a non-empty (H, W, C) array, got {values.shape}")
        if not np.isfinite(values).all():
            raise DimensionError("grid values must be finite")
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    def get(self, y: int, x: int, c: int = 0) -> float:
        """读取单个像素的值（默认通道 0）。"""
        return float(self.values[y, x, c])

    def set(self, y: int, x: int, value: float, c: int = 0) -> None:
        """方法说明：写入单个像素的值。

        非有限值（NaN、inf）会被拒绝，保持网格始终可参与算术运算。
        """
        if not np.isfinite(value):
            raise DimensionError("grid values must be finite")
        self.values[y, x, c] = value

    def copy(self) -> "DepthGrid":
        """Deep copy; the new grid owns its values."""
        return DepthGrid(self.values.copy())


def make_grid(height: int, width: int, channels: int = 1, fill: float = 0.0) -> DepthGrid:
    """Create a grid of the requested shape with every entry set to ``fill``."""
    if min(int(height), int(width), int(channels)) < 1:
        raise DimensionError(
            f"grid dimensions must be positive, got ({height}, {width}, {channels})"
        )
    if not np.isfinite(fill):
        raise DimensionError("fill value must be finite")
    return DepthGrid(np.full((int(height), int(width), int(channels)), float(fill)))


@dataclass
class SparseObservations:
    """Sparse depth d^s, validity mask m and confidence logits g_hat, all (H, W)."""

    values: np.ndarray
    mask: np.ndarray
    confidence_logits: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.array(self.values, dtype=np.float64)
        self.mask = np.array(self.mask, dtype=bool)
        self.confidence_logits = np.array(self.confidence_logits, dtype=np.float64)
        if not (self.values.shape == self.mask.shape == self.confidence_logits.shape):
            raise DimensionError("sparse values, mask and confidence logits must share one shape")
        if self.values.ndim != 2:
            raise DimensionError("sparse observations must be (H, W)")
        # masked-out values are ignored, keep them finite for arithmetic
        self.values = np.where(self.mask, self.values, 0.0)
        if not np.isfinite(self.values).all() or not np.isfinite(self.confidence_logits).all():
            raise DimensionError("sparse values and confidence logits must be finite")

    @classmethod
    def from_depth(cls, values: np.ndarray, confidence_logit: float = 4.0) -> "SparseObservations":
        """Observations where every positive depth is valid."""
        values = np.asarray(values, dtype=np.float64)
        mask = values > 0
        logits = np.where(mask, confidence_logit, 0.0)
        return cls(values, mask, logits)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def confidence(self) -> np.ndarray:
        """Effective confidence g = m * sigmoid(g_hat), zero off the mask."""
        return np.where(self.mask, sigmoid(self.confidence_logits), 0.0)

    def with_confidence(self, confidence_logits: np.ndarray) -> "SparseObservations":
        """Same samples and mask with the confidence logits replaced, e.g. by fitted ones."""
        return SparseObservations(self.values, self.mask, confidence_logits)


@lru_cache(maxsize=32)
def neighbor_offsets(kernel_size: int) -> np.ndarray:
    """(k*k - 1, 2) array of (dy, dx) offsets, row-major, centre excluded."""
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise ConfigurationError(f"kernel size must be odd and >= 3, got {kernel_size}")
    r = kernel_size // 2
    offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if (dy, dx) != (0, 0)]
    out = np.array(offsets, dtype=np.int64)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def window_indices(kernel_size: int, kernel_max: int) -> np.ndarray:
    """Slots of the ``kernel_size`` sub-window inside the ``kernel_max`` layout."""
    if kernel_size > kernel_max:
        raise ConfigurationError(
            f"kernel size {kernel_size} exceeds the affinity window {kernel_max}"
        )
    big = {tuple(o): i for i, o in enumerate(neighbor_offsets(kernel_max))}
    out = np.array([big[tuple(o)] for o in neighbor_offsets(kernel_size)], dtype=np.int64)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def neighbor_validity(height: int, width: int, kernel_size: int) -> np.ndarray:
    """(H, W, k*k - 1) boolean mask of in-image neighbours."""
    offsets = neighbor_offsets(kernel_size)
    ys = np.arange(height)[:, None, None] + offsets[None, None, :, 0]
    xs = np.arange(width)[None, :, None] + offsets[None, None, :, 1]
    valid = (ys >= 0) & (ys < height) & (xs >= 0) & (xs < width)
    valid.setflags(write=False)
    return valid


def gather_neighbors(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Stack shifted copies: out[y, x, n] = values[y + dy_n, x + dx_n], zero outside.

    参数：
        values: (H, W, C) 数组。
        offsets: (M, 2) 的 (dy, dx) 偏移，通常来自 :func:`neighbor_offsets`。

    返回：
        (H, W, M, C) 数组。图像外的邻居读到 0，由调用方的权重掩码屏蔽。
    """
    h, w, c = values.shape
    r = int(np.abs(offsets).max()) if len(offsets) else 0
    padded = np.zeros((h + 2 * r, w + 2 * r, c), dtype=values.dtype)
    padded[r : r + h, r : r + w] = values
    out = np.empty((h, w, len(offsets), c), dtype=values.dtype)
    for n, (dy, dx) in enumerate(offsets):
        out[:, :, n] = padded[r + dy : r + dy + h, r + dx : r + dx + w]
    return out


def scatter_neighbors(contrib: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`gather_neighbors`, accumulating onto the source pixels."""
    h, w, _, c = contrib.shape
    r = int(np.abs(offsets).max()) if len(offsets) else 0
    padded = np.zeros((h + 2 * r, w + 2 * r, c), dtype=contrib.dtype)
    for n, (dy, dx) in enumerate(offsets):
        padded[r + dy : r + dy + h, r + dx : r + dx + w] += contrib[:, :, n]
    return padded[r : r + h, r : r + w].copy()


@dataclass
class AffinityField:
    """Raw affinity logits (H, W, k_max*k_max - 1) shared by all kernel branches."""

    raw: np.ndarray

    def __post_init__(self) -> None:
        raw = np.array(self.raw, dtype=np.float64)
        if raw.ndim != 3:
            raise DimensionError(f"affinity field must be (H, W, M), got {raw.shape}")
        k = int(round(np.sqrt(raw.shape[2] + 1)))
        if k * k - 1 != raw.shape[2] or k < 3 or k % 2 == 0:
            raise DimensionError(
                f"affinity depth {raw.shape[2]} is not k*k - 1 for an odd kernel size"
            )
        if not np.isfinite(raw).all():
            raise DimensionError("affinity logits must be finite")
        self.raw = raw

    @classmethod
    def zeros(cls, height: int, width: int, kernel_max: int) -> "AffinityField":
        """全零亲和场：每个核都退化为恒等核。"""
        return cls(np.zeros((height, width, kernel_max * kernel_max - 1)))

    @property
    def kernel_max(self) -> int:
        """Largest window size, recovered from the slot count k*k - 1."""
        return int(round(np.sqrt(self.raw.shape[2] + 1)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.raw.shape[0], self.raw.shape[1]

    def valid_slots(self) -> np.ndarray:
        """In-image flag for every slot; out-of-image slots are treated as absent."""
        h, w = self.shape
        return neighbor_validity(h, w, self.kernel_max)


def check_same_plane(*shapes: Tuple[int, ...]) -> None:
    """Raise unless all shapes agree on (H, W)."""
    planes = {tuple(s[:2]) for s in shapes}
    if len(planes) > 1:
        raise DimensionError(f"inconsistent grid shapes: {sorted(planes)}")
