"""JSON Schemas for run configuration and scene descriptor files."""

from __future__ import annotations

_BUDGET = {
    "type": ["number", "null"],
    "exclusiveMinimum": 0,
    "maximum": 1,
}

RUN_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "propagation": {
            "type": "object",
            "properties": {
                "kernel_sizes": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 3},
                    "minItems": 1,
                    "uniqueItems": True,
                },
                "iteration_checkpoints": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 1,
                    "uniqueItems": True,
                },
                "channels": {"type": "integer", "minimum": 1},
                "minimum_configuration": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
            "additionalProperties": False,
        },
        "objective": {
            "type": "object",
            "properties": {
                "eta1": {"type": "number", "minimum": 0},
                "eta2": {"type": "number", "minimum": 0},
                "eta2_prime": {"type": "number", "minimum": 0},
                "eta3": {"type": "number", "minimum": 0},
                "latency_budget": _BUDGET,
                "memory_budget": _BUDGET,
                "depth_scale": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "fit": {
            "type": "object",
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "step_size": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "workers": {"type": "integer", "minimum": 1},
                "init_noise": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "logging": {
            "type": "object",
            "properties": {
                "level": {
                    "type": "string",
                    "enum": ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                },
                "file": {"type": ["string", "null"]},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

SCENE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "height": {"type": "integer", "minimum": 1},
        "width": {"type": "integer", "minimum": 1},
        "d_min": {"type": "number", "exclusiveMinimum": 0},
        "d_max": {"type": "number", "exclusiveMinimum": 0},
        "plane_base_mm": {"type": "number"},
        "slope_x_mm": {"type": "number"},
        "slope_y_mm": {"type": "number"},
        "random_boxes": {"type": "integer", "minimum": 0},
        "boxes": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "top": {"type": "integer", "minimum": 0},
                    "left": {"type": "integer", "minimum": 0},
                    "height": {"type": "integer", "minimum": 1},
                    "width": {"type": "integer", "minimum": 1},
                    "depth_mm": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["top", "left", "height", "width", "depth_mm"],
                "additionalProperties": False,
            },
        },
        "sampling": {
            "type": "object",
            "properties": {
                "density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "outlier_rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "outlier_scale": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "confidence_logit": {"type": "number"},
                "knn_neighbors": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}
