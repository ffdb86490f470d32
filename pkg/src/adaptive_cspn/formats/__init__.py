"""Raster files, parameter and scene directories, CSV tables."""

from .params import ManifestError, load_params, save_params, weights_from_array, weights_to_array
from .rasters import (
    RasterFormatError,
    RasterRangeError,
    decode_float_raster,
    decode_pgm,
    encode_depth,
    encode_float_raster,
    read_depth_raster,
    read_float_raster,
    read_mask_raster,
    write_depth_raster,
    write_float_raster,
    write_mask_raster,
)
from .scenes import SCENE_FILES, load_scene, save_scene
from .tables import read_csv, render_csv, write_csv

__all__ = [
    "ManifestError",
    "RasterFormatError",
    "RasterRangeError",
    "SCENE_FILES",
    "decode_float_raster",
    "decode_pgm",
    "encode_depth",
    "encode_float_raster",
    "load_params",
    "load_scene",
    "read_csv",
    "read_depth_raster",
    "read_float_raster",
    "read_mask_raster",
    "render_csv",
    "save_params",
    "save_scene",
    "weights_from_array",
    "weights_to_array",
    "write_csv",
    "write_depth_raster",
    "write_float_raster",
    "write_mask_raster",
]
