"""模块说明：资源感知传播、区域调度与预算取整的测试。"""

import math

import numpy as np
import pytest

from adaptive_cspn.analysis.cost import dense_mult_adds, selected_cost, selected_memory
from adaptive_cspn.core.errors import ContractError, DimensionError
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig
from adaptive_cspn.engine.counters import OpCounter
from adaptive_cspn.propagation.resource_aware import (
    SelectionMap,
    budget_round,
    build_regions,
    pareto_frontier,
    rounding_target,
    run_ra_cspn_naive,
    run_ra_cspn_scheduled,
    select_configuration,
)
from adaptive_cspn.propagation.vanilla import run_cspn


def _logit(p):
    return math.log(p / (1.0 - p))


def _random_selection(seed, config, size=8):
    rng = np.random.default_rng(seed)
    return SelectionMap(
        rng.choice(config.kernel_sizes, size=(size, size)),
        rng.choice(config.iteration_checkpoints, size=(size, size)),
    )


class TestSelectConfiguration:
    """逐像素 argmax 选择。"""

    def test_direct_argmax(self, config):
        alpha = np.array([[[_logit(0.2), _logit(0.5), _logit(0.3)]]])
        lam = np.zeros((1, 1, 3, 4))
        lam[0, 0, 1] = [_logit(0.1), _logit(0.4), _logit(0.3), _logit(0.2)]
        lam[0, 0, 0] = [5.0, 0.0, 0.0, 0.0]
        selection = select_configuration(AssemblyWeights(alpha, lam), config)
        assert (int(selection.k_star[0, 0]), int(selection.t_star[0, 0])) == (5, 6)

    def test_uniform_weights_tie_to_smallest(self, config):
        selection = select_configuration(AssemblyWeights.uniform(3, 3, config), config)
        assert np.all(selection.k_star == 3)
        assert np.all(selection.t_star == 3)

    def test_one_hot_largest(self, config):
        alpha = np.array([[[-9.0, -9.0, 9.0]]])
        lam = np.full((1, 1, 3, 4), -9.0)
        lam[0, 0, 2, 3] = 9.0
        selection = select_configuration(AssemblyWeights(alpha, lam), config)
        assert (int(selection.k_star[0, 0]), int(selection.t_star[0, 0])) == (7, 12)

    def test_minimum_floor(self):
        config = PropagationConfig(minimum_configuration=(5, 6))
        weights = AssemblyWeights.uniform(2, 2, config)
        floored = select_configuration(weights, config)
        assert np.all(floored.k_star == 5) and np.all(floored.t_star == 6)
        raw = select_configuration(weights, config, apply_floor=False)
        assert np.all(raw.k_star == 3) and np.all(raw.t_star == 3)

    def test_shared_shift_keeps_selection(self, config):
        rng = np.random.default_rng(51)
        for _ in range(200):
            weights = AssemblyWeights(
                rng.normal(scale=3.0, size=(4, 5, 3)), rng.normal(scale=3.0, size=(4, 5, 3, 4))
            )
            shift = rng.uniform(-20.0, 20.0)
            shifted = AssemblyWeights(weights.alpha_logits + shift, weights.lambda_logits + shift)
            a = select_configuration(weights, config)
            b = select_configuration(shifted, config)
            np.testing.assert_array_equal(a.k_star, b.k_star)
            np.testing.assert_array_equal(a.t_star, b.t_star)


class TestNaive:
    def test_uniform_selection_is_vanilla(self, config, make_instance):
        h0, raw, obs, _ = make_instance(21)
        for k, t in [(3, 3), (5, 9), (7, 12)]:
            selection = SelectionMap.uniform(8, 8, k, t)
            out = run_ra_cspn_naive(h0, raw, obs, selection, config)
            expected = run_cspn(h0, raw, obs, k, t)
            np.testing.assert_allclose(out.values, expected.values, rtol=0, atol=1e-12)

    def test_only_the_long_pixel_changes_after_minimum(self, config, make_instance):
        h0, raw, obs, _ = make_instance(22)
        short = SelectionMap.uniform(8, 8, 5, 3)
        long_t = short.t_star.copy()
        long_t[4, 3] = 12
        mixed = SelectionMap(short.k_star, long_t)
        a = run_ra_cspn_naive(h0, raw, obs, short, config).values[:, :, 0]
        b = run_ra_cspn_naive(h0, raw, obs, mixed, config).values[:, :, 0]
        changed = a != b
        changed[4, 3] = False
        assert not changed.any()

    def test_rejects_unconfigured_selection(self, config, make_instance):
        h0, raw, obs, _ = make_instance(23)
        with pytest.raises(ContractError):
            run_ra_cspn_naive(h0, raw, obs, SelectionMap.uniform(8, 8, 9, 3), config)
        with pytest.raises(ContractError):
            run_ra_cspn_naive(h0, raw, obs, SelectionMap.uniform(8, 8, 3, 4), config)
        with pytest.raises(DimensionError):
            run_ra_cspn_naive(h0, raw, obs, SelectionMap.uniform(4, 8, 3, 3), config)


class TestRegions:
    def test_uniform_selection_single_region(self):
        batch = build_regions(SelectionMap.uniform(4, 5, 5, 6))
        assert batch.counts() == {5: 20}
        assert batch.n_steps == 6

    def test_checkerboard_two_equal_regions(self):
        board = (np.indices((4, 4)).sum(axis=0) % 2).astype(bool)
        batch = build_regions(SelectionMap(np.where(board, 5, 3), np.full((4, 4), 3)))
        assert batch.counts() == {3: 8, 5: 8}

    def test_counts_match_histogram(self, config):
        selection = _random_selection(5, config, size=10)
        batch = build_regions(selection)
        assert batch.counts() == selection.histogram()
        assert batch.active_mask(1).all()
        np.testing.assert_array_equal(batch.active_mask(7), selection.t_star >= 7)


class TestScheduled:
    def test_equals_naive(self, config, make_instance):
        """100 个实例，尺寸 1x1 到 32x32。"""
        worst = 0.0
        for seed in range(100):
            size = 1 + (seed * 7) % 32
            h0, raw, obs, _ = make_instance(seed, size=size, with_obs=seed % 4 != 0)
            selection = _random_selection(seed, config, size=size)
            naive = run_ra_cspn_naive(h0, raw, obs, selection, config)
            scheduled = run_ra_cspn_scheduled(h0, raw, obs, selection, config)
            worst = max(worst, float(np.abs(scheduled.values - naive.values).max()))
        assert worst < 1e-12

    def test_equals_naive_without_observations(self, config, make_instance):
        h0, raw, _, _ = make_instance(34, with_obs=False)
        selection = _random_selection(34, config)
        np.testing.assert_allclose(
            run_ra_cspn_scheduled(h0, raw, None, selection, config).values,
            run_ra_cspn_naive(h0, raw, None, selection, config).values,
            rtol=0,
            atol=1e-12,
        )

    def test_uniform_selection_is_vanilla(self, config, make_instance):
        h0, raw, obs, _ = make_instance(35)
        out = run_ra_cspn_scheduled(h0, raw, obs, SelectionMap.uniform(8, 8, 7, 9), config)
        np.testing.assert_allclose(out.values, run_cspn(h0, raw, obs, 7, 9).values, rtol=0, atol=1e-12)

    def test_counts_only_active_pixels(self, config, make_instance):
        h0, raw, obs, _ = make_instance(36)
        selection = _random_selection(36, config)
        naive_counter, scheduled_counter = OpCounter(), OpCounter()
        run_ra_cspn_naive(h0, raw, obs, selection, config, naive_counter)
        run_ra_cspn_scheduled(h0, raw, obs, selection, config, scheduled_counter)
        assert naive_counter.mult_adds == scheduled_counter.mult_adds
        assert scheduled_counter.steps == int(selection.t_star.max())

    def test_smallest_configuration_is_over_twenty_times_cheaper(self, config, make_instance):
        h0, raw, obs, _ = make_instance(37, size=32)
        small, big = OpCounter(), OpCounter()
        run_ra_cspn_scheduled(h0, raw, obs, SelectionMap.uniform(32, 32, 3, 3), config, small)
        run_cspn(h0, raw, obs, 7, 12, counter=big)
        assert small.mult_adds == dense_mult_adds(32, 32, 3, 3)
        assert big.mult_adds == dense_mult_adds(32, 32, 7, 12)
        assert small.mult_adds / big.mult_adds < 1 / 20


class TestBudgetRound:
    """预算取整：Pareto 前沿上迭代次数最多的可行配置。"""

    def test_worked_example(self, config):
        selection = SelectionMap.uniform(3, 3, 7, 12)
        rounded = budget_round(selection, config, 100 / 588)
        assert np.all(rounded.k_star == 3)
        assert np.all(rounded.t_star == 9)
        assert selected_cost(rounded, config) <= 100 / 588

    def test_feasible_pixels_unchanged(self, config):
        k = np.array([[3, 7], [5, 3]])
        t = np.array([[3, 12], [3, 9]])
        rounded = budget_round(SelectionMap(k, t), config, 100 / 588)
        assert rounded.k_star.tolist() == [[3, 3], [5, 3]]
        assert rounded.t_star.tolist() == [[3, 9], [3, 9]]

    def test_only_smallest_feasible(self, config):
        selection = _random_selection(41, config)
        rounded = budget_round(selection, config, 27 / 588)
        assert np.all(rounded.k_star == 3) and np.all(rounded.t_star == 3)

    @pytest.mark.parametrize("budget", [0.05, 0.1, 0.25, 0.5, 0.9])
    def test_every_pixel_meets_budget(self, config, budget):
        rounded = budget_round(_random_selection(42, config), config, budget)
        assert rounded.pixel_costs(config).max() <= budget + 1e-12
        assert selected_cost(rounded, config) <= budget + 1e-12

    def test_memory_budget_limits_kernel(self, config):
        rounded = budget_round(SelectionMap.uniform(2, 2, 7, 12), config, 1.0, 9 / 49)
        assert np.all(rounded.k_star == 3)
        assert np.all(rounded.t_star == 12)
        assert selected_memory(rounded, config) == pytest.approx(9 / 49)

    def test_memory_budget_never_raises_cost(self, config):
        """(5,3) 超出内存预算时只能移到不更贵的配置 (3,6)，而不是 (3,12)。"""
        selection = SelectionMap(np.array([[5, 7]]), np.array([[3, 12]]))
        rounded = budget_round(selection, config, 1.0, 9 / 49)
        assert rounded.k_star.tolist() == [[3, 3]]
        assert rounded.t_star.tolist() == [[6, 12]]
        assert rounded.pixel_costs(config)[0, 0] == pytest.approx(54 / 588)
        assert rounded.pixel_costs(config)[0, 0] < 75 / 588

    def test_ceiling_caps_the_target(self, config):
        assert rounding_target(config, 1.0, 9 / 49) == (3, 12)
        assert rounding_target(config, 1.0, 9 / 49, ceiling=75 / 588) == (3, 6)
        assert rounding_target(config, 1.0, 0.1, ceiling=75 / 588) == (3, 3)

    def test_never_increases_any_pixel_cost(self, config):
        rng = np.random.default_rng(52)
        for seed in range(200):
            selection = _random_selection(seed, config, size=int(rng.integers(1, 12)))
            latency = float(rng.uniform(27 / 588, 1.0))
            memory = [None, 9 / 49, 25 / 49, 0.3, 1.0][seed % 5]
            rounded = budget_round(selection, config, latency, memory)
            assert (rounded.pixel_costs(config) <= selection.pixel_costs(config) + 1e-15).all()
            assert rounded.pixel_costs(config).max() <= latency + 1e-12

    @pytest.mark.parametrize("budget", [27 / 588, 0.1, 0.35, 1.0])
    def test_budget_guarantee_on_random_maps(self, config, budget):
        for seed in range(100):
            selection = _random_selection(1000 + seed, config, size=1 + seed % 16)
            rounded = budget_round(selection, config, budget)
            assert rounded.pixel_costs(config).max() <= budget + 1e-12
            kept = selection.pixel_costs(config) <= budget + 1e-12
            np.testing.assert_array_equal(rounded.k_star[kept], selection.k_star[kept])
            np.testing.assert_array_equal(rounded.t_star[kept], selection.t_star[kept])

    def test_infeasible_budget_falls_back_to_cheapest(self, config):
        assert rounding_target(config, 0.01) == (3, 3)

    def test_rejects_non_positive_budget(self, config):
        with pytest.raises(ContractError):
            budget_round(SelectionMap.uniform(2, 2, 3, 3), config, 0.0)
        with pytest.raises(ContractError):
            budget_round(SelectionMap.uniform(2, 2, 3, 3), config, 0.5, -1.0)


def test_pareto_frontier():
    points = [(3, 3), (3, 9), (5, 3), (5, 6), (7, 3), (5, 6)]
    assert pareto_frontier(points) == [(7, 3), (5, 6), (3, 9)]
    assert pareto_frontier([(3, 3)]) == [(3, 3)]
