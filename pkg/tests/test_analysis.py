"""模块说明：深度误差指标的测试。"""

import numpy as np
import pytest

from adaptive_cspn.analysis.metrics import depth_metrics
from adaptive_cspn.core.errors import ContractError, DimensionError
from adaptive_cspn.core.grid import DepthGrid


def test_perfect_prediction_has_zero_error():
    gt = DepthGrid(np.array([[1000.0, 3000.0], [2500.0, 7000.0]]))
    m = depth_metrics(gt, gt)
    assert (m.rmse, m.mae, m.irmse, m.imae) == (0.0, 0.0, 0.0, 0.0)


def test_worked_example():
    """pred (2000, 3000) mm 对 gt (1000, 3000) mm。"""
    m = depth_metrics(np.array([[2000.0, 3000.0]]), np.array([[1000.0, 3000.0]]))
    assert m.rmse == pytest.approx(1000 / np.sqrt(2))
    assert m.mae == pytest.approx(500.0)
    assert m.irmse == pytest.approx(500 / np.sqrt(2))
    assert m.imae == pytest.approx(250.0)


def test_valid_mask_restricts_pixels():
    pred = np.array([[2000.0, 9999.0]])
    gt = np.array([[1000.0, 1.0]])
    m = depth_metrics(pred, gt, np.array([[True, False]]))
    assert m.rmse == pytest.approx(1000.0)
    assert m.as_dict()["mae"] == pytest.approx(1000.0)


def test_inverse_error_guards_non_positive_prediction():
    m = depth_metrics(np.array([[0.0]]), np.array([[1000.0]]))
    assert np.isfinite(m.irmse)


def test_rejects_bad_inputs():
    with pytest.raises(DimensionError):
        depth_metrics(np.zeros((2, 2)), np.ones((2, 3)))
    with pytest.raises(ContractError):
        depth_metrics(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), dtype=bool))
    with pytest.raises(ContractError):
        depth_metrics(np.ones((1, 2)), np.array([[1.0, 0.0]]))


def test_rmse_never_below_mae():
    """均方根不小于平均绝对误差（幂平均不等式），逐次评估都成立。"""
    rng = np.random.default_rng(61)
    for _ in range(1000):
        h, w = (int(v) for v in rng.integers(1, 20, size=2))
        gt = rng.uniform(500.0, 80000.0, size=(h, w))
        pred = gt + rng.normal(scale=10.0 ** rng.uniform(-2, 4), size=(h, w))
        valid = rng.random((h, w)) < 0.8
        valid.flat[0] = True
        m = depth_metrics(pred, gt, valid)
        assert m.rmse >= m.mae * (1 - 1e-12)
        assert m.irmse >= m.imae * (1 - 1e-12)
    # equal absolute errors are the equality case
    m = depth_metrics(np.array([[1100.0, 900.0]]), np.array([[1000.0, 1000.0]]))
    assert m.rmse == pytest.approx(m.mae, rel=1e-15)
