"""Context-aware propagation: guided replacement, checkpoint accumulation and assembly."""

import math

import numpy as np
import pytest

from adaptive_cspn.analysis.cost import dense_mult_adds
from adaptive_cspn.core.errors import ContractError
from adaptive_cspn.core.grid import AffinityField, DepthGrid, SparseObservations
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig, sigmoid
from adaptive_cspn.engine.counters import OpCounter
from adaptive_cspn.propagation.affinity import effective_kernel, normalize
from adaptive_cspn.propagation.context_aware import (
    BranchState,
    ca_accumulate,
    ca_assemble,
    forward_ca_cspn,
    guided_replace,
    run_ca_cspn,
)
from adaptive_cspn.propagation.vanilla import PropagationState, cspn_step, run_cspn


def _logit(p):
    return math.log(p / (1.0 - p))


def naive_ca(h0, raw, obs, weights, config):
    """Snapshot-and-combine oracle with explicit pixel loops."""
    h, w = h0.shape
    g = np.where(obs.mask, sigmoid(obs.confidence_logits), 0.0) if obs is not None else np.zeros((h, w))
    d = obs.values if obs is not None else np.zeros((h, w))
    alpha = weights.alpha()
    lam = weights.lambdas()
    out = np.zeros((h, w))
    for ki, k in enumerate(config.kernel_sizes):
        kernel = normalize(raw, k)
        offsets = kernel.offsets
        snapshots = {}
        current = h0.copy()
        for step in range(1, config.n_steps + 1):
            nxt = np.empty_like(current)
            for y in range(h):
                for x in range(w):
                    value = kernel.center_weight[y, x] * h0[y, x]
                    for n, (dy, dx) in enumerate(offsets):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w:
                            value += kernel.neighbor_weights[y, x, n] * current[yy, xx]
                    nxt[y, x] = value
            current = (1.0 - g) * nxt + g * d
            snapshots[step] = current
        branch = sum(
            lam[:, :, ki, ti] * snapshots[t] for ti, t in enumerate(config.iteration_checkpoints)
        )
        out += alpha[:, :, ki] * branch
    return (1.0 - g) * out + g * d


class TestGuidedReplace:
    """置信度引导替换。"""

    def _single(self, logit, mask=True):
        return SparseObservations(np.array([[200.0]]), np.array([[mask]]), np.array([[logit]]))

    def test_zero_logit_halves(self):
        out = guided_replace(DepthGrid(np.array([[100.0]])), self._single(0.0))
        assert out.get(0, 0) == pytest.approx(150.0)

    def test_unmasked_keeps_grid(self):
        out = guided_replace(DepthGrid(np.array([[100.0]])), self._single(5.0, mask=False))
        assert out.get(0, 0) == 100.0

    def test_saturated_logit_reaches_sample(self):
        out = guided_replace(DepthGrid(np.array([[100.0]])), self._single(10.0))
        assert out.get(0, 0) == pytest.approx(200.0, rel=1e-4)


class TestAccumulate:
    def test_single_checkpoint_equals_one_step(self):
        config = PropagationConfig(kernel_sizes=(3,), iteration_checkpoints=(1,))
        rng = np.random.default_rng(0)
        h0 = DepthGrid(rng.uniform(1.0, 2.0, size=(5, 5)))
        raw = AffinityField(rng.normal(size=(5, 5, 8)))
        kernel = normalize(raw, 3)
        weights = AssemblyWeights.uniform(5, 5, config)
        branch = ca_accumulate(BranchState.start(h0, 0, 3), kernel, weights, (1,))
        expected = cspn_step(PropagationState.start(h0), kernel).values
        np.testing.assert_array_equal(branch.accumulator, expected)
        np.testing.assert_allclose(branch.consumed_lambda, 1.0)

    def test_uniform_lambda_is_snapshot_mean(self, config, make_instance):
        h0, raw, _, _ = make_instance(1)
        weights = AssemblyWeights.uniform(8, 8, config)
        kernel = normalize(raw, 5)
        branch = BranchState.start(h0, 1, 5, keep_snapshots=True)
        for _ in range(config.n_steps):
            ca_accumulate(branch, kernel, weights, config.iteration_checkpoints)
        mean = np.mean([branch.states[t] for t in (3, 6, 9, 12)], axis=0)
        np.testing.assert_allclose(branch.accumulator, mean, rtol=1e-13)
        assert len(branch.states) == 13
        assert len(branch.proposals) == 12

    def test_running_past_last_checkpoint_fails(self):
        config = PropagationConfig(kernel_sizes=(3,), iteration_checkpoints=(1,))
        h0 = DepthGrid(np.ones((2, 2)))
        kernel = normalize(AffinityField.zeros(2, 2, 3), 3)
        weights = AssemblyWeights.uniform(2, 2, config)
        branch = ca_accumulate(BranchState.start(h0, 0, 3), kernel, weights, (1,))
        with pytest.raises(ContractError):
            ca_accumulate(branch, kernel, weights, (1,))


class TestAssemble:
    def _branch(self, ki, k, accumulator):
        acc = np.asarray(accumulator, dtype=float)[:, :, None]
        return BranchState(
            kernel_index=ki,
            kernel_size=k,
            h0=np.zeros_like(acc),
            current=np.zeros_like(acc),
            accumulator=acc,
            consumed_lambda=np.ones(acc.shape[:2]),
            step=12,
        )

    def _weights(self, alpha_logits):
        alpha = np.broadcast_to(np.asarray(alpha_logits, dtype=float), (2, 2, 3)).copy()
        return AssemblyWeights(alpha, np.zeros((2, 2, 3, 4)))

    def test_nearly_one_hot_alpha_selects_branch(self):
        accs = [np.full((2, 2), v) for v in (1.0, 2.0, 3.0)]
        branches = [self._branch(i, k, a) for i, (k, a) in enumerate(zip((3, 5, 7), accs))]
        out = ca_assemble(branches, self._weights([-50.0, 50.0, -50.0]))
        np.testing.assert_allclose(out.values[:, :, 0], 2.0, rtol=1e-12)

    def test_identical_branches(self):
        acc = np.array([[1.0, 2.0], [3.0, 4.0]])
        branches = [self._branch(i, k, acc) for i, k in enumerate((3, 5, 7))]
        out = ca_assemble(branches, self._weights([0.3, -1.2, 2.0]))
        np.testing.assert_allclose(out.values[:, :, 0], acc, rtol=1e-13)

    def test_hand_computed_mixture(self):
        accs = [
            np.array([[1.0, 2.0], [3.0, 4.0]]),
            np.array([[10.0, 20.0], [30.0, 40.0]]),
            np.array([[100.0, 200.0], [300.0, 400.0]]),
        ]
        branches = [self._branch(i, k, a) for i, (k, a) in enumerate(zip((3, 5, 7), accs))]
        weights = self._weights([_logit(0.2), _logit(0.3), _logit(0.5)])
        out = ca_assemble(branches, weights)
        expected = 0.2 * accs[0] + 0.3 * accs[1] + 0.5 * accs[2]
        np.testing.assert_allclose(out.values[:, :, 0], expected, rtol=1e-12)

    def test_incomplete_branch_rejected(self):
        branches = [self._branch(i, k, np.ones((2, 2))) for i, k in enumerate((3, 5, 7))]
        branches[1].consumed_lambda = np.full((2, 2), 0.5)
        with pytest.raises(ContractError):
            ca_assemble(branches, self._weights([0.0, 0.0, 0.0]))
        with pytest.raises(ContractError):
            ca_assemble(branches[:2], self._weights([0.0, 0.0, 0.0]))


class TestRunCA:
    def test_single_kernel_single_checkpoint_is_vanilla(self):
        config = PropagationConfig(kernel_sizes=(3,), iteration_checkpoints=(12,))
        rng = np.random.default_rng(2)
        h0 = DepthGrid(rng.uniform(1.0, 2.0, size=(6, 6)))
        raw = AffinityField(rng.normal(size=(6, 6, 8)))
        weights = AssemblyWeights.uniform(6, 6, config)
        out = run_ca_cspn(h0, raw, None, weights, config)
        expected = run_cspn(h0, raw, None, 3, 12)
        np.testing.assert_allclose(out.values, expected.values, rtol=0, atol=1e-12)

    def test_zero_logits_return_blended_anchor(self, config):
        h0 = DepthGrid(np.full((4, 4), 3.0))
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 2] = True
        obs = SparseObservations(np.where(mask, 5.0, 0.0), mask, np.zeros((4, 4)))
        out = run_ca_cspn(h0, AffinityField.zeros(4, 4, 7), obs, AssemblyWeights.uniform(4, 4, config), config)
        # state is 0.5*3 + 0.5*5 = 4 on the sample; the final replacement blends once more
        assert out.get(1, 2) == pytest.approx(4.5)
        assert out.get(0, 0) == pytest.approx(3.0)

    def test_matches_naive_oracle(self, config, make_instance):
        h0, raw, obs, weights = make_instance(11)
        out = run_ca_cspn(h0, raw, obs, weights, config)
        expected = naive_ca(h0.values[:, :, 0], raw, obs, weights, config)
        np.testing.assert_allclose(out.values[:, :, 0], expected, rtol=0, atol=1e-12)

    def test_snapshot_record_recombines_to_output(self, config, make_instance):
        h0, raw, obs, weights = make_instance(12)
        record = forward_ca_cspn(h0, raw, obs, weights, config, keep_snapshots=True)
        assert record.has_snapshots
        lam = weights.lambdas()
        alpha = weights.alpha()
        assembled = np.zeros_like(record.assembled)
        for branch in record.branches:
            ki = branch.kernel_index
            for ti, t in enumerate(config.iteration_checkpoints):
                assembled += alpha[:, :, ki, None] * lam[:, :, ki, ti, None] * branch.states[t]
        np.testing.assert_allclose(record.assembled, assembled, rtol=1e-12)

    def test_parallel_branches_match_serial(self, config, make_instance):
        h0, raw, obs, weights = make_instance(13)
        serial = run_ca_cspn(h0, raw, obs, weights, config, workers=1)
        parallel = run_ca_cspn(h0, raw, obs, weights, config, workers=3)
        np.testing.assert_array_equal(serial.values, parallel.values)

    def test_counter_sums_every_branch(self, config, make_instance):
        h0, raw, obs, weights = make_instance(14)
        counter = OpCounter()
        run_ca_cspn(h0, raw, obs, weights, config, counter=counter, workers=2)
        expected = sum(dense_mult_adds(8, 8, k, config.n_steps) for k in config.kernel_sizes)
        assert counter.mult_adds == expected


class TestAssemblyProperties:
    """组合性质：λ 质量守恒、有界输出与单步等价。"""

    @pytest.mark.parametrize("scale", [1.0, 10.0, 300.0])
    def test_lambda_mass_is_conserved(self, config, make_instance, scale):
        for seed in range(20):
            h0, raw, obs, weights = make_instance(seed, config=config)
            weights.lambda_logits *= scale
            record = forward_ca_cspn(h0, raw, obs, weights, config, keep_snapshots=True)
            for branch in record.branches:
                assert branch.step == config.n_steps
                np.testing.assert_allclose(branch.consumed_lambda, 1.0, rtol=0, atol=1e-12)

    def test_nonnegative_logits_keep_output_in_anchor_range(self, config, make_instance):
        for seed in range(30):
            h0, _, _, weights = make_instance(seed, config=config, with_obs=False)
            rng = np.random.default_rng(1000 + seed)
            raw = AffinityField(rng.uniform(0.0, 1.0, size=(8, 8, 48)))
            out = run_ca_cspn(h0, raw, None, weights, config).values
            low, high = h0.values.min(), h0.values.max()
            assert low - 1e-12 <= out.min() and out.max() <= high + 1e-12

    def test_one_step_assembly_equals_effective_kernel(self, make_instance):
        config = PropagationConfig(iteration_checkpoints=(1,))
        worst = 0.0
        for seed in range(100):
            h0, raw, _, weights = make_instance(seed, config=config, with_obs=False)
            out = run_ca_cspn(h0, raw, None, weights, config).values
            kernel = effective_kernel(raw, weights.alpha(), config)
            single = cspn_step(PropagationState.start(h0), kernel).values
            worst = max(worst, float(np.abs(out - single).max()))
        assert worst < 1e-12
