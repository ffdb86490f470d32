"""Affinity normalisation and the equivalent single kernel of a mixture."""

import numpy as np
import pytest

from adaptive_cspn.core.errors import ConfigurationError, ContractError
from adaptive_cspn.core.grid import AffinityField, window_indices
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig
from adaptive_cspn.propagation.affinity import (
    effective_kernel,
    masked_logits,
    normalize,
    normalize_backward,
)
from adaptive_cspn.propagation.vanilla import step_values


def _field_3x3(center_logits):
    raw = np.zeros((3, 3, 8))
    raw[1, 1] = center_logits
    return AffinityField(raw)


def test_interior_pixel_direct_arithmetic():
    kernel = normalize(_field_3x3([2.0, -1.0, 1.0, 0, 0, 0, 0, 0]), 3)
    np.testing.assert_allclose(kernel.neighbor_weights[1, 1], [0.5, -0.25, 0.25, 0, 0, 0, 0, 0])
    assert kernel.center_weight[1, 1] == pytest.approx(0.5)


def test_all_zero_logits_give_identity_kernel():
    kernel = normalize(AffinityField.zeros(4, 5, 3), 3)
    assert not kernel.neighbor_weights.any()
    assert np.all(kernel.center_weight == 1.0)


def test_corner_pixel_ignores_out_of_image_slots():
    raw = np.zeros((3, 3, 8))
    # slots 4, 6, 7 are (0, 1), (1, 0), (1, 1): the only in-image ones at (0, 0)
    raw[0, 0] = [5.0, 5.0, 5.0, 5.0, 1.0, 5.0, 1.0, 2.0]
    kernel = normalize(AffinityField(raw), 3)
    expected = np.zeros(8)
    expected[[4, 6, 7]] = [0.25, 0.25, 0.5]
    np.testing.assert_allclose(kernel.neighbor_weights[0, 0], expected)
    assert kernel.center_weight[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_l1_norm_bound_and_centre_remainder():
    rng = np.random.default_rng(4)
    raw = AffinityField(rng.normal(size=(6, 6, 48)))
    for k in (3, 5, 7):
        kernel = normalize(raw, k)
        l1 = np.abs(kernel.neighbor_weights).sum(axis=2)
        np.testing.assert_allclose(l1, 1.0)
        np.testing.assert_allclose(
            kernel.center_weight, 1.0 - kernel.neighbor_weights.sum(axis=2), atol=1e-15
        )
        assert not kernel.neighbor_weights[~kernel.valid].any()


def test_kernel_size_checks():
    raw = AffinityField.zeros(3, 3, 5)
    with pytest.raises(ConfigurationError):
        normalize(raw, 7)
    with pytest.raises(ConfigurationError):
        normalize(raw, 5, PropagationConfig(kernel_sizes=(3,)))


def test_single_kernel_mixture_is_that_kernel():
    config = PropagationConfig(kernel_sizes=(7,))
    rng = np.random.default_rng(5)
    raw = AffinityField(rng.normal(size=(5, 5, 48)))
    mixed = effective_kernel(raw, np.array([1.0]), config)
    plain = normalize(raw, 7)
    np.testing.assert_array_equal(mixed.neighbor_weights, plain.neighbor_weights)
    np.testing.assert_array_equal(mixed.center_weight, plain.center_weight)


def test_nearly_one_hot_mixture_approaches_largest_kernel(config):
    rng = np.random.default_rng(6)
    raw = AffinityField(rng.normal(size=(5, 5, 48)))
    alpha = np.array([1e-13, 1e-13, 1.0 - 2e-13])
    mixed = effective_kernel(raw, alpha, config)
    np.testing.assert_allclose(mixed.neighbor_weights, normalize(raw, 7).neighbor_weights, atol=1e-12)


def test_mixture_step_equals_effective_kernel_step(config):
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        raw = AffinityField(rng.normal(size=(8, 8, 48)))
        alpha = rng.dirichlet(np.ones(3), size=(8, 8))
        h0 = rng.uniform(1.0, 2.0, size=(8, 8, 1))
        ht = rng.uniform(1.0, 2.0, size=(8, 8, 1))
        mixture = sum(
            alpha[:, :, ki, None] * step_values(h0, ht, normalize(raw, k))
            for ki, k in enumerate(config.kernel_sizes)
        )
        single = step_values(h0, ht, effective_kernel(raw, alpha, config))
        worst = max(worst, float(np.abs(single - mixture).max()))
    assert worst < 1e-12


def test_effective_kernel_l1_bound(config):
    rng = np.random.default_rng(8)
    raw = AffinityField(rng.normal(size=(6, 6, 48)))
    alpha = rng.dirichlet(np.ones(3), size=(6, 6))
    mixed = effective_kernel(raw, alpha, config)
    assert (np.abs(mixed.neighbor_weights).sum(axis=2) <= 1.0 + 1e-12).all()


def test_effective_kernel_rejects_unnormalised_alpha(config):
    raw = AffinityField.zeros(2, 2, 7)
    with pytest.raises(ContractError):
        effective_kernel(raw, np.array([0.5, 0.5, 0.5]), config)
    with pytest.raises(ContractError):
        effective_kernel(raw, np.array([1.0, 0.0, 0.0]), config)


def test_normalize_backward_matches_finite_differences():
    rng = np.random.default_rng(9)
    values = rng.choice([-1.0, 1.0], size=(4, 4, 24)) * rng.uniform(0.3, 1.0, size=(4, 4, 24))
    raw = AffinityField(values)
    a = rng.normal(size=(4, 4, 8))
    b = rng.normal(size=(4, 4))

    def f(field):
        kernel = normalize(field, 3)
        return float((a * kernel.neighbor_weights).sum() + (b * kernel.center_weight).sum())

    kernel = normalize(raw, 3)
    analytic = normalize_backward(raw, kernel, a, b)
    eps = 1e-6
    for idx in [(0, 0, 12), (1, 2, 7), (3, 3, 16), (2, 1, 0), (0, 3, 5)]:
        plus = values.copy()
        minus = values.copy()
        plus[idx] += eps
        minus[idx] -= eps
        numeric = (f(AffinityField(plus)) - f(AffinityField(minus))) / (2 * eps)
        assert analytic[idx] == pytest.approx(numeric, abs=1e-7)
    # slots outside the 3x3 sub-window do not influence a k=3 kernel
    outside = np.ones(24, dtype=bool)
    outside[window_indices(3, 5)] = False
    assert not analytic[:, :, outside].any()


class TestNormalizationSuite:
    """十万个随机亲和窗口：L1 归一、中心权重补足、混合权重和为一。"""

    def test_affinity_windows(self):
        rng = np.random.default_rng(31)
        windows = 0
        for _ in range(100):
            scale = 10.0 ** rng.uniform(-3.0, 3.0)
            values = rng.normal(scale=scale, size=(32, 32, 48))
            values[rng.random((32, 32)) < 0.05] = 0.0
            raw = AffinityField(values)
            for k in (3, 5, 7):
                kernel = normalize(raw, k)
                live = np.abs(masked_logits(raw, k)).sum(axis=2) > 0
                l1 = np.abs(kernel.neighbor_weights).sum(axis=2)
                np.testing.assert_allclose(l1[live], 1.0, rtol=0, atol=1e-12)
                assert not kernel.neighbor_weights[~live].any()
                assert (kernel.center_weight[~live] == 1.0).all()
                np.testing.assert_allclose(
                    kernel.center_weight, 1.0 - kernel.neighbor_weights.sum(axis=2), rtol=0, atol=1e-12
                )
            windows += 32 * 32
        assert windows >= 100_000

    def test_mixture_weights_sum_to_one(self, config):
        rng = np.random.default_rng(32)
        n = 100_000
        spread = 10.0 ** rng.uniform(-2.0, 2.5, size=(n, 1, 1))
        weights = AssemblyWeights(
            rng.normal(size=(n, 1, config.num_kernels)) * spread,
            rng.normal(size=(n, 1, config.num_kernels, config.num_checkpoints)) * spread[..., None],
        )
        np.testing.assert_allclose(weights.alpha().sum(axis=-1), 1.0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(weights.lambdas().sum(axis=-1), 1.0, rtol=0, atol=1e-12)
        assert (weights.alpha() >= 0).all() and (weights.lambdas() >= 0).all()
