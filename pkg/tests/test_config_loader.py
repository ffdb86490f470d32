"""模块说明：运行配置与场景描述文件加载的测试。"""

import json
import os
from pathlib import Path

import pytest

from adaptive_cspn.config.loader import (
    CONFIG_ENV,
    ConfigError,
    ConfigLoader,
    RunConfig,
    load_run_config,
    load_scene_spec,
    resolve_config_path,
    scene_spec_as_dict,
    scene_spec_from_dict,
)
from adaptive_cspn.data_gen.scene import BoxSpec, SceneSpec


def test_load_yaml(tmp_path: Path):
    """方法说明：执行 test load yaml 相关逻辑。"""
    config_path = tmp_path / "config.yaml"
    config_path.write_text(
        """
propagation:
  kernel_sizes: [3, 5]
  iteration_checkpoints: [2, 4]
objective:
  eta2: 0.3
  latency_budget: 0.25
fit:
  epochs: 40
  step_size: 0.02
logging:
  level: DEBUG
        """,
        encoding="utf-8",
    )
    cfg = ConfigLoader().load(config_path)
    assert cfg.propagation.kernel_sizes == (3, 5)
    assert cfg.propagation.k_max == 5
    assert cfg.objective.eta2 == 0.3
    assert cfg.objective.latency_budget == 0.25
    assert cfg.fit.epochs == 40
    assert cfg.fit.seed == 0
    assert cfg.logging.level == "DEBUG"
    assert cfg.source == str(config_path)


def test_empty_file_gives_defaults(tmp_path: Path):
    config_path = tmp_path / "empty.yaml"
    config_path.write_text("", encoding="utf-8")
    assert ConfigLoader().load(config_path).as_dict() == RunConfig().as_dict()


def test_schema_violation(tmp_path: Path):
    """方法说明：执行 test schema violation 相关逻辑。"""
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"objective": {"latency_budget": 1.5}}), encoding="utf-8")
    with pytest.raises(ConfigError) as exc_info:
        ConfigLoader().load(config_path)
    assert exc_info.value.category == "schema"
    assert "latency_budget" in str(exc_info.value)


def test_unknown_key_is_rejected(tmp_path: Path):
    config_path = tmp_path / "config.yaml"
    config_path.write_text("propagation:\n  kernel_size: 3\n", encoding="utf-8")
    with pytest.raises(ConfigError) as exc_info:
        ConfigLoader().load(config_path)
    assert exc_info.value.category == "schema"


def test_value_error_category(tmp_path: Path):
    """偶数卷积核尺寸通过 Schema 但在构造参数时被拒绝。"""
    config_path = tmp_path / "config.yaml"
    config_path.write_text("propagation:\n  kernel_sizes: [3, 4]\n", encoding="utf-8")
    with pytest.raises(ConfigError) as exc_info:
        ConfigLoader().load(config_path)
    assert exc_info.value.category == "value"


def test_parse_and_io_errors(tmp_path: Path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("propagation: [unclosed", encoding="utf-8")
    with pytest.raises(ConfigError) as exc_info:
        ConfigLoader().load(broken)
    assert exc_info.value.category == "parse"

    with pytest.raises(ConfigError) as exc_info:
        ConfigLoader().load(tmp_path / "missing.yaml")
    assert exc_info.value.category == "io"

    text = tmp_path / "config.txt"
    text.write_text("{}", encoding="utf-8")
    with pytest.raises(ConfigError) as exc_info:
        ConfigLoader().load(text)
    assert exc_info.value.category == "io"


def test_reload_after_change(tmp_path: Path):
    config_path = tmp_path / "config.yaml"
    config_path.write_text("fit:\n  epochs: 5\n", encoding="utf-8")
    loader = ConfigLoader()
    assert loader.load(config_path).fit.epochs == 5
    config_path.write_text("fit:\n  epochs: 9\n", encoding="utf-8")
    stat = config_path.stat()
    os.utime(config_path, (stat.st_atime, stat.st_mtime + 5))
    assert loader.load(config_path).fit.epochs == 9


def test_dump_round_trip(tmp_path: Path):
    loader = ConfigLoader()
    source = tmp_path / "source.yaml"
    source.write_text("objective:\n  memory_budget: 0.4\n", encoding="utf-8")
    cfg = loader.load(source)
    for name in ("out.yaml", "out.json"):
        loader.dump(cfg, tmp_path / name)
        assert loader.load(tmp_path / name).as_dict() == cfg.as_dict()


def test_resolve_config_path(tmp_path: Path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert resolve_config_path() is None
    assert load_run_config() == RunConfig()

    env_path = tmp_path / "env.yaml"
    env_path.write_text("fit:\n  seed: 3\n", encoding="utf-8")
    monkeypatch.setenv(CONFIG_ENV, str(env_path))
    assert resolve_config_path() == env_path
    assert load_run_config().fit.seed == 3
    assert resolve_config_path("explicit.yaml") == Path("explicit.yaml")


class TestSceneSpec:
    def test_from_dict(self):
        spec = scene_spec_from_dict(
            {
                "height": 20,
                "width": 30,
                "random_boxes": 0,
                "boxes": [{"top": 1, "left": 2, "height": 3, "width": 4, "depth_mm": 2500}],
                "sampling": {"density": 0.1, "outlier_rate": 0.2},
            }
        )
        assert (spec.height, spec.width) == (20, 30)
        assert spec.boxes == (BoxSpec(1, 2, 3, 4, 2500),)
        assert spec.sampling.outlier_rate == 0.2
        assert spec.sampling.outlier_scale == 0.5

    def test_dict_round_trip(self):
        spec = SceneSpec(boxes=(BoxSpec(0, 0, 2, 2, 1500.0),))
        assert scene_spec_from_dict(scene_spec_as_dict(spec)) == spec

    def test_invalid_descriptor(self):
        with pytest.raises(ConfigError) as exc_info:
            scene_spec_from_dict({"sampling": {"density": 0}})
        assert exc_info.value.category == "schema"
        with pytest.raises(ConfigError) as exc_info:
            scene_spec_from_dict({"d_min": 5000, "d_max": 1000})
        assert exc_info.value.category == "value"

    def test_load_from_file(self, tmp_path: Path):
        path = tmp_path / "scene.yaml"
        path.write_text("height: 12\nwidth: 14\n", encoding="utf-8")
        assert load_scene_spec(path) == SceneSpec(height=12, width=14)
        with pytest.raises(ConfigError):
            load_scene_spec(tmp_path / "nope.yaml")


def test_shipped_config_files_are_valid():
    """仓库自带的配置文件必须通过 Schema 校验。"""
    root = Path(__file__).resolve().parents[1] / "config"
    cfg = ConfigLoader().load(root / "config.yaml")
    assert cfg.as_dict() == RunConfig().as_dict()
    spec = load_scene_spec(root / "scene_default.yaml")
    assert spec.boxes[0].depth_mm == 2500
    assert spec.sampling.density == 0.05
