"""Synthetic scenes, sparse sampling and seeded random streams."""

from .rng import make_rng
from .scene import (
    BoxSpec,
    SamplingSpec,
    SceneSpec,
    SyntheticScene,
    default_scene_spec,
    densify_sparse,
    edge_map,
    make_scene,
    outlier_fraction,
    sample_sparse,
    scene_with_sampling,
)

__all__ = [
    "BoxSpec",
    "SamplingSpec",
    "SceneSpec",
    "SyntheticScene",
    "default_scene_spec",
    "densify_sparse",
    "edge_map",
    "make_rng",
    "make_scene",
    "outlier_fraction",
    "sample_sparse",
    "scene_with_sampling",
]
