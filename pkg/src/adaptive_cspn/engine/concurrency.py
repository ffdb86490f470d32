"""Thread-pool helper for independent propagation branches.

``BranchRunner`` maps callables over a bounded ``ThreadPoolExecutor`` and
returns results in submission order, so combining them afterwards is
independent of completion order. ``workers=1`` runs inline.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")

logger = logging.getLogger(__name__)


class BranchRunner:
    """Run independent jobs with a bounded thread pool."""

    def __init__(self, max_workers: int = 1) -> None:
        self._max_workers = max(1, int(max_workers))
        self._executor: Optional[ThreadPoolExecutor] = None

    @property
    def max_workers(self) -> int:
        return self._max_workers

    def run_calls(self, funcs: Iterable[Callable[[], T]]) -> List[T]:
        """Execute every callable and return results in submission order."""
        jobs = list(funcs)
        if self._max_workers == 1 or len(jobs) <= 1:
            return [job() for job in jobs]
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self._max_workers)
        logger.debug("running %d branches on %d workers", len(jobs), self._max_workers)
        futures = [self._executor.submit(job) for job in jobs]
        return [future.result() for future in futures]

    def shutdown(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "BranchRunner":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.shutdown()
