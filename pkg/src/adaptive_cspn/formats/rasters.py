"""Binary raster files: 16-bit depth PGM, 8-bit mask PGM and CSPF float grids.

Depth rasters follow the KITTI convention: a sample ``v`` stores
``round(depth_m * 256)`` big-endian and ``v == 0`` marks an invalid pixel.
In memory depth stays in millimetres. CSPF files hold float64 grids
losslessly::

    b"CSPF" | version u32 | height u32 | width u32 | channels u32 | data

with little-endian integers and little-endian float64 data laid out
row-major, channel fastest.
"""

from __future__ import annotations

import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from adaptive_cspn.core.errors import CSPNError
from adaptive_cspn.core.grid import DepthGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEPTH_SCALE = 256.0
DEPTH_MAXVAL = 65535
MASK_MAXVAL = 255
CSPF_MAGIC = b"CSPF"
CSPF_VERSION = 1
_CSPF_HEADER = struct.Struct("<4sIIII")


class RasterFormatError(CSPNError, ValueError):
    """Malformed or truncated raster file; ``offset`` is the offending byte."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class RasterRangeError(CSPNError, ValueError):
    """Value that the target encoding cannot represent."""


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """Write via a temporary file in the target directory and rename it in place."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------


def encode_pgm(samples: np.ndarray, maxval: int, comment: Optional[str] = None) -> bytes:
    """P5 bytes for an (H, W) array of integer samples in [0, maxval]."""
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise RasterRangeError(f"PGM samples must be (H, W), got {samples.shape}")
    h, w = samples.shape
    header = "P5\n"
    if comment:
        header += f"# {comment}\n"
    header += f"{w} {h}\n{maxval}\n"
    dtype = ">u2" if maxval > 255 else "u1"
    return header.encode("ascii") + samples.astype(dtype).tobytes()


def _header_tokens(data: bytes, count: int) -> Tuple[list, int]:
    """First ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset just past the single whitespace byte
    that ends the last token.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise RasterFormatError("truncated PGM header", pos)
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append((data[start:pos], start))
    if pos >= n or not data[pos : pos + 1].isspace():
        raise RasterFormatError("PGM header must end with one whitespace byte", pos)
    return tokens, pos + 1


def decode_pgm(data: bytes) -> Tuple[np.ndarray, int]:
    """(H, W) integer samples and maxval from P5 bytes."""
    if data[:2] != b"P5":
        raise RasterFormatError(f"bad PGM magic {data[:2]!r}", 0)
    tokens, body = _header_tokens(data[2:], 3)
    values = []
    for raw, start in tokens:
        try:
            values.append(int(raw.decode("ascii")))
        except (UnicodeDecodeError, ValueError):
            raise RasterFormatError(f"bad PGM header field {raw!r}", start + 2) from None
    width, height, maxval = values
    offset = body + 2
    if width < 1 or height < 1:
        raise RasterFormatError(f"bad PGM size {width}x{height}", offset)
    if not 0 < maxval <= DEPTH_MAXVAL:
        raise RasterFormatError(f"bad PGM maxval {maxval}", offset)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    available = len(data) - offset
    if available < expected:
        raise RasterFormatError(
            f"truncated PGM data: need {expected} bytes, found {available}", len(data)
        )
    samples = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    samples = samples.reshape(height, width).astype(np.int64)
    if (samples > maxval).any():
        bad = int(np.argmax(samples.ravel() > maxval))
        raise RasterFormatError("PGM sample exceeds maxval", offset + bad * dtype.itemsize)
    return samples, maxval


def _plane(depth) -> np.ndarray:
    if isinstance(depth, DepthGrid):
        return depth.values[:, :, 0]
    values = np.asarray(depth, dtype=np.float64)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    if values.ndim != 2:
        raise RasterRangeError(f"depth raster must be (H, W), got {values.shape}")
    return values


def encode_depth(depth_mm, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Integer samples for depth in millimetres; pixels off ``mask`` or at 0 encode 0."""
    plane = _plane(depth_mm)
    selected = np.ones(plane.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if selected.shape != plane.shape:
        raise RasterRangeError(f"mask {selected.shape} does not match depth {plane.shape}")
    values = plane[selected]
    if not np.isfinite(values).all():
        raise RasterRangeError("depth must be finite")
    if (values < 0).any() or (values >= 1000.0 * (DEPTH_MAXVAL + 1) / DEPTH_SCALE).any():
        raise RasterRangeError("depth must lie in [0, 256) m")
    samples = np.zeros(plane.shape, dtype=np.int64)
    samples[selected] = np.rint(values / 1000.0 * DEPTH_SCALE).astype(np.int64)
    if (samples > DEPTH_MAXVAL).any():
        raise RasterRangeError(f"depth rounds above the largest sample {DEPTH_MAXVAL}")
    if (selected & (plane > 0) & (samples == 0)).any():
        raise RasterRangeError("valid depth below 1/512 m would encode as invalid")
    return samples


def decode_depth(samples: np.ndarray) -> Tuple[DepthGrid, np.ndarray]:
    mask = samples > 0
    return DepthGrid(samples.astype(np.float64) / DEPTH_SCALE * 1000.0), mask


def write_depth_raster(path: PathLike, depth_mm, mask: Optional[np.ndarray] = None) -> Path:
    """16-bit depth PGM for a millimetre grid (stored in metres x 256)."""
    samples = encode_depth(depth_mm, mask)
    payload = encode_pgm(samples, DEPTH_MAXVAL, comment="depth_m*256, 0=invalid")
    target = atomic_write_bytes(path, payload)
    logger.debug("wrote depth raster %s (%dx%d)", target, samples.shape[1], samples.shape[0])
    return target


def read_depth_raster(path: PathLike) -> Tuple[DepthGrid, np.ndarray]:
    """Depth in millimetres (0 where invalid) and the validity mask."""
    samples, maxval = decode_pgm(Path(path).read_bytes())
    if maxval != DEPTH_MAXVAL:
        raise RasterFormatError(f"depth raster maxval must be {DEPTH_MAXVAL}, got {maxval}", 2)
    return decode_depth(samples)


def write_mask_raster(path: PathLike, mask: np.ndarray) -> Path:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise RasterRangeError(f"mask must be (H, W), got {mask.shape}")
    payload = encode_pgm(np.where(mask, MASK_MAXVAL, 0), MASK_MAXVAL, comment="validity mask")
    return atomic_write_bytes(path, payload)


def read_mask_raster(path: PathLike) -> np.ndarray:
    samples, _ = decode_pgm(Path(path).read_bytes())
    return samples > 0


# ---------------------------------------------------------------------------
# CSPF
# ---------------------------------------------------------------------------


def encode_float_raster(values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3 or min(values.shape) < 1:
        raise RasterRangeError(f"float raster must be a non-empty (H, W, C) array, got {values.shape}")
    h, w, c = values.shape
    header = _CSPF_HEADER.pack(CSPF_MAGIC, CSPF_VERSION, h, w, c)
    return header + np.ascontiguousarray(values).astype("<f8").tobytes()


def decode_float_raster(data: bytes) -> np.ndarray:
    """(H, W, C) float64 array from CSPF bytes; the length must match exactly."""
    if len(data) < _CSPF_HEADER.size:
        raise RasterFormatError("truncated CSPF header", len(data))
    magic, version, h, w, c = _CSPF_HEADER.unpack_from(data, 0)
    if magic != CSPF_MAGIC:
        raise RasterFormatError(f"bad CSPF magic {magic!r}", 0)
    if version != CSPF_VERSION:
        raise RasterFormatError(f"unsupported CSPF version {version}", 4)
    if min(h, w, c) < 1:
        raise RasterFormatError(f"bad CSPF shape ({h}, {w}, {c})", 8)
    expected = _CSPF_HEADER.size + 8 * h * w * c
    if len(data) < expected:
        raise RasterFormatError(
            f"truncated CSPF data: need {expected} bytes, found {len(data)}", len(data)
        )
    if len(data) > expected:
        raise RasterFormatError("trailing bytes after CSPF data", expected)
    values = np.frombuffer(data, dtype="<f8", count=h * w * c, offset=_CSPF_HEADER.size)
    return values.astype(np.float64).reshape(h, w, c)


def write_float_raster(path: PathLike, values: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_float_raster(values))


def read_float_raster(path: PathLike) -> np.ndarray:
    return decode_float_raster(Path(path).read_bytes())
