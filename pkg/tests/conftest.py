"""测试公共夹具：小尺寸场景、随机实例与标记注册。"""

import warnings

import numpy as np
import pytest

from adaptive_cspn.core.grid import AffinityField, DepthGrid, SparseObservations
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig
from adaptive_cspn.data_gen.scene import SamplingSpec, SceneSpec, make_scene

warnings.filterwarnings("ignore", category=DeprecationWarning)


def pytest_configure(config):
    """注册项目内使用的 pytest 标记。"""
    config.addinivalue_line("markers", "slow: long-running paired fits")


@pytest.fixture
def config():
    return PropagationConfig()


@pytest.fixture
def small_spec():
    """16x16 场景，采样密度较高，保证拟合测试足够快。"""
    return SceneSpec(height=16, width=16, random_boxes=1, sampling=SamplingSpec(density=0.2))


@pytest.fixture
def small_scene(small_spec):
    return make_scene(small_spec, seed=7)


def random_instance(seed, size=8, kernel_max=7, config=None, with_obs=True):
    """Seeded (h0, raw, obs, weights) on a size x size grid with O(1) depths."""
    config = config or PropagationConfig()
    rng = np.random.default_rng(seed)
    h0 = DepthGrid(rng.uniform(1.0, 3.0, size=(size, size)))
    raw = AffinityField(rng.normal(0.0, 1.0, size=(size, size, kernel_max * kernel_max - 1)))
    obs = None
    if with_obs:
        mask = rng.random((size, size)) < 0.25
        obs = SparseObservations(
            np.where(mask, rng.uniform(1.0, 3.0, size=(size, size)), 0.0),
            mask,
            rng.normal(0.0, 1.0, size=(size, size)),
        )
    weights = AssemblyWeights(
        rng.normal(0.0, 1.0, size=(size, size, config.num_kernels)),
        rng.normal(0.0, 1.0, size=(size, size, config.num_kernels, config.num_checkpoints)),
    )
    return h0, raw, obs, weights


@pytest.fixture
def instance():
    return random_instance(3)


@pytest.fixture
def make_instance():
    return random_instance
