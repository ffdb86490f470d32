"""Context-aware propagation: per-kernel branches with checkpoint accumulation.

Each kernel branch runs N recurrent steps; after every step the recurrent
state receives confidence-guided replacement, and at each iteration
checkpoint the replaced state is added to the branch accumulator with weight
lambda_x(k, t). Branch accumulators are blended with alpha_x(k) and the
blend receives one final guided replacement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from adaptive_cspn.core.errors import ContractError, DimensionError
from adaptive_cspn.core.grid import AffinityField, DepthGrid, SparseObservations, check_same_plane
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig
from adaptive_cspn.engine.concurrency import BranchRunner
from adaptive_cspn.engine.counters import OpCounter
from adaptive_cspn.propagation.affinity import NormalizedKernel, normalize
from adaptive_cspn.propagation.vanilla import count_step, step_values

logger = logging.getLogger(__name__)


@dataclass
class BranchState:
    """Recurrent state, accumulator and consumed lambda mass of one kernel branch.

    With ``keep_snapshots`` the branch records H_t for t = 0..N in ``states``
    and the pre-replacement proposals P_t for t = 1..N in ``proposals``.
    """

    kernel_index: int
    kernel_size: int
    h0: np.ndarray
    current: np.ndarray
    accumulator: np.ndarray
    consumed_lambda: np.ndarray
    step: int = 0
    keep_snapshots: bool = False
    states: List[np.ndarray] = field(default_factory=list)
    proposals: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def start(
        cls, h0: DepthGrid, kernel_index: int, kernel_size: int, keep_snapshots: bool = False
    ) -> "BranchState":
        values = h0.values
        h, w, _ = values.shape
        branch = cls(
            kernel_index=kernel_index,
            kernel_size=kernel_size,
            h0=values,
            current=values.copy(),
            accumulator=np.zeros_like(values),
            consumed_lambda=np.zeros((h, w)),
            keep_snapshots=keep_snapshots,
        )
        if keep_snapshots:
            branch.states.append(values.copy())
        return branch


def guided_replace_values(values: np.ndarray, obs: SparseObservations) -> np.ndarray:
    g = obs.confidence()[:, :, None]
    return (1.0 - g) * values + g * obs.values[:, :, None]


def guided_replace(grid: DepthGrid, obs: SparseObservations) -> DepthGrid:
    """out = (1 - g) * grid + g * d^s with g = m * sigmoid(g_hat)."""
    if obs.shape != grid.shape[:2]:
        raise DimensionError(f"observations {obs.shape} do not match grid {grid.shape[:2]}")
    return DepthGrid(guided_replace_values(grid.values, obs))


def ca_accumulate(
    branch: BranchState,
    kernel: NormalizedKernel,
    weights: AssemblyWeights,
    checkpoint_set: Sequence[int],
    obs: Optional[SparseObservations] = None,
    counter: Optional[OpCounter] = None,
) -> BranchState:
    """Advance ``branch`` by one step and accumulate it at checkpoints.

    ``checkpoint_set`` is the ordered checkpoint list; lambda is normalised
    over it. The branch is updated in place and returned.
    """
    checkpoints = list(checkpoint_set)
    if branch.step >= checkpoints[-1]:
        raise ContractError(
            f"branch for kernel {branch.kernel_size} already ran {branch.step} of {checkpoints[-1]} steps"
        )
    if kernel.size != branch.kernel_size or kernel.shape != branch.h0.shape[:2]:
        raise DimensionError("kernel does not match the branch")

    proposal = step_values(branch.h0, branch.current, kernel)
    count_step(kernel, branch.h0.shape[2], counter)
    state = guided_replace_values(proposal, obs) if obs is not None else proposal
    branch.current = state
    branch.step += 1
    if branch.keep_snapshots:
        branch.proposals.append(proposal)
        branch.states.append(state)

    if branch.step in checkpoints:
        ci = checkpoints.index(branch.step)
        lam = weights.lambdas()[:, :, branch.kernel_index, ci]
        branch.accumulator = branch.accumulator + lam[:, :, None] * state
        branch.consumed_lambda = branch.consumed_lambda + lam
    return branch


def ca_assemble(branches: Sequence[BranchState], weights: AssemblyWeights) -> DepthGrid:
    """alpha-weighted sum of completed branch accumulators."""
    alpha = weights.alpha()
    if len(branches) != alpha.shape[2]:
        raise ContractError(f"expected {alpha.shape[2]} branches, got {len(branches)}")
    n_steps = max(b.step for b in branches) if branches else 0
    out = None
    for branch in branches:
        if branch.step != n_steps or not np.allclose(branch.consumed_lambda, 1.0, atol=1e-9):
            raise ContractError(f"branch for kernel {branch.kernel_size} has not completed")
        term = alpha[:, :, branch.kernel_index, None] * branch.accumulator
        out = term if out is None else out + term
    return DepthGrid(out)


@dataclass
class CAForwardRecord:
    """Everything a context-aware run produced, kept for the backward pass."""

    h0: DepthGrid
    raw: AffinityField
    obs: Optional[SparseObservations]
    weights: AssemblyWeights
    config: PropagationConfig
    kernels: List[NormalizedKernel]
    branches: List[BranchState]
    assembled: np.ndarray
    output: np.ndarray
    counter: Optional[OpCounter] = None

    @property
    def has_snapshots(self) -> bool:
        n = self.config.n_steps
        return all(
            b.keep_snapshots and len(b.states) == n + 1 and len(b.proposals) == n
            for b in self.branches
        )


def _check_inputs(
    h0: DepthGrid,
    raw: AffinityField,
    obs: Optional[SparseObservations],
    weights: AssemblyWeights,
    config: PropagationConfig,
) -> None:
    shapes = [h0.shape, raw.raw.shape, weights.alpha_logits.shape]
    if obs is not None:
        shapes.append(obs.shape)
    check_same_plane(*shapes)
    weights.check_config(config)


def forward_ca_cspn(
    h0: DepthGrid,
    raw: AffinityField,
    obs: Optional[SparseObservations],
    weights: AssemblyWeights,
    config: PropagationConfig,
    keep_snapshots: bool = False,
    runner: Optional[BranchRunner] = None,
    count: bool = False,
) -> CAForwardRecord:
    """Run every kernel branch and assemble them; return the full record."""
    _check_inputs(h0, raw, obs, weights, config)
    kernels = [normalize(raw, k, config) for k in config.kernel_sizes]
    checkpoints = config.iteration_checkpoints

    def run_branch(ki: int):
        counter = OpCounter() if count else None
        branch = BranchState.start(h0, ki, config.kernel_sizes[ki], keep_snapshots)
        for _ in range(config.n_steps):
            ca_accumulate(branch, kernels[ki], weights, checkpoints, obs, counter)
        return branch, counter

    runner = runner or BranchRunner(1)
    results = runner.run_calls([lambda ki=ki: run_branch(ki) for ki in range(config.num_kernels)])
    branches = [branch for branch, _ in results]
    counter = OpCounter.merged(c for _, c in results if c is not None) if count else None

    assembled = ca_assemble(branches, weights).values
    output = guided_replace_values(assembled, obs) if obs is not None else assembled
    logger.debug(
        "ca run: kernels=%s checkpoints=%s workers=%d",
        config.kernel_sizes,
        checkpoints,
        runner.max_workers,
    )
    return CAForwardRecord(
        h0=h0,
        raw=raw,
        obs=obs,
        weights=weights,
        config=config,
        kernels=kernels,
        branches=branches,
        assembled=assembled,
        output=output,
        counter=counter,
    )


def run_ca_cspn(
    h0: DepthGrid,
    raw: AffinityField,
    obs: Optional[SparseObservations],
    weights: AssemblyWeights,
    config: PropagationConfig,
    counter: Optional[OpCounter] = None,
    workers: int = 1,
) -> DepthGrid:
    """Context-aware propagation output for the given parameters."""
    count = counter is not None and counter.enabled
    with BranchRunner(workers) as runner:
        record = forward_ca_cspn(h0, raw, obs, weights, config, runner=runner, count=count)
    if count and record.counter is not None:
        counter.absorb(record.counter)
    return DepthGrid(record.output)
