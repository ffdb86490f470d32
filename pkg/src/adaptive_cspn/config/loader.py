"""配置加载模块：读取运行配置与场景描述文件，执行 Schema 校验并构造参数对象。"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Union

import jsonschema
import yaml
from jsonschema import ValidationError

from adaptive_cspn.config.schema import RUN_SCHEMA, SCENE_SCHEMA
from adaptive_cspn.core.errors import CSPNError
from adaptive_cspn.core.params import ObjectiveConfig, PropagationConfig
from adaptive_cspn.data_gen.scene import BoxSpec, SamplingSpec, SceneSpec

logger = logging.getLogger(__name__)

CONFIG_ENV = "ADAPTIVE_CSPN_CONFIG"
DEFAULT_CONFIG_PATH = Path("config") / "config.yaml"

PathLike = Union[str, Path]


class ConfigError(ValueError):
    """Structured configuration error with a category ("io", "parse", "schema", "value")."""

    def __init__(self, category: str, message: str, *, detail: Optional[str] = None) -> None:
        super().__init__(message)
        self.category = category
        self.detail = detail


@dataclass(frozen=True)
class FitSettings:
    epochs: int = 200
    step_size: float = 0.05
    seed: int = 0
    workers: int = 1
    init_noise: float = 0.05


@dataclass(frozen=True)
class LoggingSettings:
    level: str = "INFO"
    file: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    """运行配置的数据模型（内存结构）。"""

    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    fit: FitSettings = field(default_factory=FitSettings)
    logging: LoggingSettings = field(default_factory=LoggingSettings)
    source: Optional[str] = None

    def as_dict(self) -> Dict[str, Any]:
        prop = asdict(self.propagation)
        prop["kernel_sizes"] = list(prop["kernel_sizes"])
        prop["iteration_checkpoints"] = list(prop["iteration_checkpoints"])
        prop["minimum_configuration"] = list(prop["minimum_configuration"])
        return {
            "propagation": prop,
            "objective": asdict(self.objective),
            "fit": asdict(self.fit),
            "logging": asdict(self.logging),
        }


def _read_document(path: Path, schema: Dict[str, Any]) -> Dict[str, Any]:
    suffix = path.suffix.lower()
    if suffix not in {".json", ".yml", ".yaml"}:
        raise ConfigError("io", f"Unsupported config format for {path}: {suffix}")
    try:
        content = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("io", f"Failed to read config {path}", detail=str(exc)) from exc
    try:
        data = yaml.safe_load(content) if suffix in (".yml", ".yaml") else json.loads(content)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("parse", f"Failed to parse config {path}", detail=str(exc)) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("parse", f"Config root must be an object in {path}")
    try:
        jsonschema.validate(data, schema)
    except ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError("schema", f"{path}: {where}: {exc.message}") from exc
    return data


class ConfigLoader:
    """配置加载器：支持 YAML/JSON，按修改时间缓存解析结果。"""

    def __init__(self, schema: Optional[Dict[str, Any]] = None) -> None:
        self._schema = schema or RUN_SCHEMA

    def load(self, path: PathLike) -> RunConfig:
        path = Path(path)
        try:
            mtime = path.stat().st_mtime
        except OSError as exc:
            raise ConfigError("io", f"Config file not found: {path}", detail=str(exc)) from exc
        return self._load_cached(f"{path}:{mtime}", str(path))

    @lru_cache(maxsize=16)
    def _load_cached(self, cache_key: str, path_str: str) -> RunConfig:
        path = Path(path_str)
        data = _read_document(path, self._schema)
        config = run_config_from_dict(data, source=str(path))
        logger.debug("loaded run config %s", path)
        return config

    def dump(self, config: RunConfig, path: PathLike) -> None:
        """将配置对象写回文件（YAML 或 JSON）。"""
        payload = config.as_dict()
        target = Path(path)
        if target.suffix.lower() in {".yml", ".yaml"}:
            target.write_text(yaml.safe_dump(payload, sort_keys=False), encoding="utf-8")
        else:
            target.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def run_config_from_dict(data: Dict[str, Any], source: Optional[str] = None) -> RunConfig:
    """Build a RunConfig from an already validated mapping."""
    try:
        prop = dict(data.get("propagation") or {})
        for key in ("kernel_sizes", "iteration_checkpoints", "minimum_configuration"):
            if key in prop:
                prop[key] = tuple(prop[key])
        return RunConfig(
            propagation=PropagationConfig(**prop),
            objective=ObjectiveConfig(**(data.get("objective") or {})),
            fit=FitSettings(**(data.get("fit") or {})),
            logging=LoggingSettings(**(data.get("logging") or {})),
            source=source,
        )
    except (CSPNError, TypeError) as exc:
        raise ConfigError("value", f"Invalid configuration value: {exc}") from exc


def resolve_config_path(explicit: Optional[PathLike] = None) -> Optional[Path]:
    """``--config`` flag, then $ADAPTIVE_CSPN_CONFIG, then ./config/config.yaml if present."""
    if explicit:
        return Path(explicit)
    env = os.getenv(CONFIG_ENV)
    if env:
        return Path(env)
    if DEFAULT_CONFIG_PATH.exists():
        return DEFAULT_CONFIG_PATH
    return None


def load_run_config(
    explicit: Optional[PathLike] = None, loader: Optional[ConfigLoader] = None
) -> RunConfig:
    path = resolve_config_path(explicit)
    if path is None:
        return RunConfig()
    return (loader or ConfigLoader()).load(path)


def scene_spec_from_dict(data: Dict[str, Any]) -> SceneSpec:
    try:
        jsonschema.validate(data, SCENE_SCHEMA)
    except ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError("schema", f"scene descriptor: {where}: {exc.message}") from exc
    values = dict(data)
    boxes = tuple(BoxSpec(**box) for box in values.pop("boxes", []))
    sampling = SamplingSpec(**values.pop("sampling", {}))
    spec = SceneSpec(boxes=boxes, sampling=sampling, **values)
    try:
        spec.validate()
    except CSPNError as exc:
        raise ConfigError("value", f"Invalid scene descriptor: {exc}") from exc
    return spec


def scene_spec_as_dict(spec: SceneSpec) -> Dict[str, Any]:
    payload = asdict(spec)
    payload["boxes"] = [dict(box) for box in payload["boxes"]]
    return payload


def load_scene_spec(path: PathLike) -> SceneSpec:
    """场景描述文件（YAML/JSON）转换为 SceneSpec。"""
    path = Path(path)
    if not path.exists():
        raise ConfigError("io", f"Scene descriptor not found: {path}")
    return scene_spec_from_dict(_read_document(path, SCENE_SCHEMA))
