"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class CSPNError(Exception):
    """Base class for all propagation-library errors."""


class DimensionError(CSPNError, ValueError):
    """Raised when array shapes or grid dimensions are inconsistent."""


class ConfigurationError(CSPNError, ValueError):
    """Raised for invalid kernel sizes, checkpoints or objective weights."""


class ContractError(CSPNError, ValueError):
    """Raised when a caller violates an operation precondition."""


class DivergenceError(CSPNError, ArithmeticError):
    """Raised when an optimisation produces a non-finite objective."""

    def __init__(self, message: str, epoch: int) -> None:
        super().__init__(message)
        self.epoch = epoch
