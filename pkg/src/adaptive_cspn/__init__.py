"""Adaptive convolutional spatial propagation for depth completion."""

__version__ = "0.1.0"

__all__ = ["__version__"]
