"""Configuration management components.

Run configuration and scene descriptors are read from YAML/JSON, validated
against JSON Schemas and turned into frozen parameter objects.
"""

from .loader import (
    CONFIG_ENV,
    ConfigError,
    ConfigLoader,
    FitSettings,
    LoggingSettings,
    RunConfig,
    load_run_config,
    load_scene_spec,
    resolve_config_path,
    run_config_from_dict,
    scene_spec_as_dict,
    scene_spec_from_dict,
)
from .schema import RUN_SCHEMA, SCENE_SCHEMA

__all__ = [
    "CONFIG_ENV",
    "ConfigError",
    "ConfigLoader",
    "FitSettings",
    "LoggingSettings",
    "RUN_SCHEMA",
    "RunConfig",
    "SCENE_SCHEMA",
    "load_run_config",
    "load_scene_spec",
    "resolve_config_path",
    "run_config_from_dict",
    "scene_spec_as_dict",
    "scene_spec_from_dict",
]
