"""Monitoring components."""

from .metrics import (
    FIT_EPOCHS,
    MULT_ADDS,
    PROPAGATION_RUNS,
    record_epoch,
    record_error,
    record_run,
    write_metrics,
)

__all__ = [
    "FIT_EPOCHS",
    "MULT_ADDS",
    "PROPAGATION_RUNS",
    "record_epoch",
    "record_error",
    "record_run",
    "write_metrics",
]
