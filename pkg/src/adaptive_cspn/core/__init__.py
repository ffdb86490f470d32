"""Shared value types for grids, configurations and parameter fields."""

from .errors import (
    ConfigurationError,
    ContractError,
    CSPNError,
    DimensionError,
    DivergenceError,
)
from .grid import (
    AffinityField,
    DepthGrid,
    SparseObservations,
    gather_neighbors,
    make_grid,
    neighbor_offsets,
    neighbor_validity,
    scatter_neighbors,
    window_indices,
)
from .params import (
    AssemblyWeights,
    ObjectiveConfig,
    PropagationConfig,
    normalize_logits,
    normalized_alpha,
    normalized_lambda,
    sigmoid,
)

__all__ = [
    "AffinityField",
    "AssemblyWeights",
    "ConfigurationError",
    "ContractError",
    "CSPNError",
    "DepthGrid",
    "DimensionError",
    "DivergenceError",
    "ObjectiveConfig",
    "PropagationConfig",
    "SparseObservations",
    "gather_neighbors",
    "make_grid",
    "neighbor_offsets",
    "neighbor_validity",
    "normalize_logits",
    "normalized_alpha",
    "normalized_lambda",
    "scatter_neighbors",
    "sigmoid",
    "window_indices",
]
