"""Multiply-add and live-memory counters for instrumented propagation runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional


@dataclass
class OpCounter:
    """Per-worker counter; merge worker counters with ``+`` or :meth:`merge`.

    ``mult_adds`` counts one multiply-add per (pixel, in-image window slot,
    channel), the centre slot included. ``peak_elements`` is the largest
    gathered window buffer (|f| x |R| elements) alive during one step.
    """

    enabled: bool = True
    mult_adds: int = 0
    peak_elements: int = 0
    steps: int = 0

    def add_step(self, mult_adds: int, live_elements: int) -> None:
        if not self.enabled:
            return
        self.mult_adds += int(mult_adds)
        self.peak_elements = max(self.peak_elements, int(live_elements))
        self.steps += 1

    def merge(self, other: "OpCounter") -> "OpCounter":
        """Combine counters of work that ran side by side."""
        return OpCounter(
            enabled=self.enabled and other.enabled,
            mult_adds=self.mult_adds + other.mult_adds,
            peak_elements=self.peak_elements + other.peak_elements,
            steps=max(self.steps, other.steps),
        )

    def absorb(self, other: "OpCounter") -> None:
        """Fold ``other`` into this counter in place."""
        if not self.enabled:
            return
        merged = self.merge(other)
        self.mult_adds = merged.mult_adds
        self.peak_elements = merged.peak_elements
        self.steps = merged.steps

    def __add__(self, other: "OpCounter") -> "OpCounter":
        return self.merge(other)

    @classmethod
    def merged(cls, counters: Iterable["OpCounter"]) -> "OpCounter":
        total = cls()
        for counter in counters:
            total = total.merge(counter)
        return total


@dataclass
class ExecutionTrace:
    """What a run did: its mode, counters, selection or weights, and wall time."""

    mode: str
    counter: Optional[OpCounter]
    kernel_size: Optional[int] = None
    n_steps: Optional[int] = None
    selection: Any = None
    weights: Any = None
    wall_time_s: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)
