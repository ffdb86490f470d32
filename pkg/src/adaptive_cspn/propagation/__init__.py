"""Vanilla, context-aware and resource-aware spatial propagation."""

from .affinity import NormalizedKernel, effective_kernel, normalize, normalize_backward
from .context_aware import (
    BranchState,
    CAForwardRecord,
    ca_accumulate,
    ca_assemble,
    forward_ca_cspn,
    guided_replace,
    run_ca_cspn,
)
from .resource_aware import (
    Region,
    RegionBatch,
    SelectionMap,
    budget_round,
    build_regions,
    pareto_frontier,
    rounding_target,
    run_ra_cspn_naive,
    run_ra_cspn_scheduled,
    select_configuration,
)
from .vanilla import PropagationState, cspn_step, replace, run_cspn

__all__ = [
    "BranchState",
    "CAForwardRecord",
    "NormalizedKernel",
    "PropagationState",
    "Region",
    "RegionBatch",
    "SelectionMap",
    "budget_round",
    "build_regions",
    "ca_accumulate",
    "ca_assemble",
    "cspn_step",
    "effective_kernel",
    "forward_ca_cspn",
    "guided_replace",
    "normalize",
    "normalize_backward",
    "pareto_frontier",
    "replace",
    "rounding_target",
    "run_ca_cspn",
    "run_cspn",
    "run_ra_cspn_naive",
    "run_ra_cspn_scheduled",
    "select_configuration",
]
