"""Adaptive advisor triggering: accuracy buffer, trend slope, and gates.

The advisor fires only when (1) the cooldown since the last call has passed,
(2) the buffer holds enough episodes for trend analysis, and (3) the
least-squares slope of recent accuracies falls below the stagnation
threshold.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import InsufficientData

BUFFER_CAPACITY = 10


@dataclass
class PerformanceBuffer:
    """FIFO of the most recent episode accuracies, capacity 10."""

    accs: deque = field(default_factory=lambda: deque(maxlen=BUFFER_CAPACITY))

    def __len__(self) -> int:
        return len(self.accs)


@dataclass(frozen=True)
class TriggerConfig:
    slope_threshold: float = 0.01
    cooldown: int = 5
    min_buffer: int = 5

    def __post_init__(self):
        if self.slope_threshold <= 0 or self.cooldown <= 0 or self.min_buffer <= 0:
            raise ValueError("trigger parameters must be positive")


def update_buffer(buffer: PerformanceBuffer, acc: float) -> None:
    """Append the newest accuracy; the oldest falls out at capacity."""
    if not 0.0 <= acc <= 1.0:
        raise ValueError("accuracy must be in [0, 1]")
    buffer.accs.append(acc)


def compute_slope(buffer: PerformanceBuffer) -> float:
    """Ordinary least-squares slope of the buffered accuracies against
    their window positions 1..n."""
    values = list(buffer.accs)
    n = len(values)
    if n < 2:
        raise InsufficientData("need at least 2 accuracies for a slope")
    mean_i = (n + 1) / 2.0
    mean_acc = sum(values) / n
    num = sum((i + 1 - mean_i) * (acc - mean_acc) for i, acc in enumerate(values))
    den = sum((i + 1 - mean_i) ** 2 for i in range(n))
    return num / den


def should_trigger(
    episode: int,
    buffer: PerformanceBuffer,
    last_call: int,
    cfg: TriggerConfig | None = None,
) -> bool:
    """Trigger decision: cooldown gate, then readiness gate, then slope gate."""
    cfg = cfg or TriggerConfig()
    if episode - last_call < cfg.cooldown:
        return False
    if len(buffer) < cfg.min_buffer:
        return False
    return compute_slope(buffer) < cfg.slope_threshold
