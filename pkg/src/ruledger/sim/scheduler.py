"""Single-threaded discrete-event scheduler over integer milliseconds.

All concurrency in simulation mode is cooperative: callbacks run one at a
time in (time, insertion) order, so a given seed always replays the exact
same schedule.  Time is integral to keep ordering free of float noise.
"""

from __future__ import annotations

import heapq
from typing import Callable


class SimulationPanic(RuntimeError):
    """The event loop hit its safety bound without quiescing."""


class Scheduler:
    def __init__(self) -> None:
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0  # FIFO tie-break for same-time events
        self.now = 0
        self.events_processed = 0

    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> None:
        if delay_ms < 0:
            raise ValueError(f"negative delay: {delay_ms}")
        heapq.heappush(self._queue, (self.now + int(delay_ms), self._seq, fn))
        self._seq += 1

    def pending(self) -> int:
        return len(self._queue)

    def run(self, until: int | None = None, max_events: int = 5_000_000) -> None:
        """Drain the queue, optionally stopping before events after `until`."""
        while self._queue:
            when = self._queue[0][0]
            if until is not None and when > until:
                return
            when, _, fn = heapq.heappop(self._queue)
            self.now = when
            fn()
            self.events_processed += 1
            if self.events_processed > max_events:
                raise SimulationPanic(
                    f"exceeded {max_events} events without quiescing"
                )
