"""Execution helpers: branch thread pool and operation counters."""

from .concurrency import BranchRunner
from .counters import ExecutionTrace, OpCounter

__all__ = ["BranchRunner", "ExecutionTrace", "OpCounter"]
