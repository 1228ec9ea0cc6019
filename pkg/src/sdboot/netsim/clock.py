"""Simulated clock and event queue.

Time is simulated seconds, never wall time. Events fire in (time, insertion
sequence) order, which makes every run with the same inputs replay the same
schedule exactly.
"""

from __future__ import annotations

import heapq
from typing import Any, Callable


class EventCapExceeded(RuntimeError):
    """Tripped when run_until_idle fires more events than its cap allows."""


class Timer:
    __slots__ = ("time", "seq", "fn", "cancelled")

    def __init__(self, time: float, seq: int, fn: Callable[[], Any]):
        self.time = time
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "Timer") -> bool:
        return (self.time, self.seq) < (other.time, other.seq)


class Clock:
    def __init__(self) -> None:
        self._now = 0.0
        self._queue: list[Timer] = []
        self._seq = 0

    @property
    def now(self) -> float:
        return self._now

    def schedule(self, delay: float, fn: Callable[[], Any]) -> Timer:
        if delay < 0:
            raise ValueError(f"negative delay {delay}")
        timer = Timer(self._now + delay, self._seq, fn)
        self._seq += 1
        heapq.heappush(self._queue, timer)
        return timer

    def pending(self) -> int:
        return sum(1 for t in self._queue if not t.cancelled)

    def advance(self, until: float) -> int:
        """Fire every event scheduled at or before `until`; returns the count."""
        if until < self._now:
            raise ValueError(f"cannot advance backwards to {until}")
        fired = 0
        while self._queue and self._queue[0].time <= until:
            timer = heapq.heappop(self._queue)
            if timer.cancelled:
                continue
            self._now = timer.time
            timer.fn()
            fired += 1
        self._now = until
        return fired

    def run_until_idle(self, max_events: int = 1_000_000) -> float:
        """Drain the queue in order; returns the final simulated time."""
        fired = 0
        while self._queue:
            timer = heapq.heappop(self._queue)
            if timer.cancelled:
                continue
            if fired >= max_events:
                raise EventCapExceeded(f"exceeded {max_events} events at t={self._now:.6f}")
            self._now = timer.time
            timer.fn()
            fired += 1
        return self._now
