"""Injectable time source shared by the mock printer, client, and scheduler.

All components read time from one clock object.  ``VirtualClock`` makes a
whole production run execute in microseconds of wall time while preserving
second-accurate timestamps; ``RealClock`` maps the same interface onto the
monotonic wall clock for runs against real hardware.
"""

from __future__ import annotations

import threading
import time
from typing import Protocol, runtime_checkable

__all__ = ["Clock", "RealClock", "VirtualClock"]


@runtime_checkable
class Clock(Protocol):
    def now(self) -> float:
        """Current time in seconds; monotone non-decreasing."""

    def sleep(self, seconds: float) -> None:
        """Block the caller until ``seconds`` have elapsed."""

    def advance_to(self, target: float) -> None:
        """Block until the clock reads at least ``target``."""


class RealClock:
    """Wall-clock time, zeroed at construction."""

    def __init__(self) -> None:
        self._epoch = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._epoch

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"cannot sleep {seconds} s")
        time.sleep(seconds)

    def advance_to(self, target: float) -> None:
        remaining = target - self.now()
        if remaining > 0:
            time.sleep(remaining)


class VirtualClock:
    """Simulated time: sleeping advances the clock instead of waiting.

    Safe to share across threads; the mock print server reads ``now()``
    from its handler threads while the driving thread advances time.
    """

    def __init__(self, start: float = 0.0) -> None:
        self._time = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._time

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"cannot sleep {seconds} s")
        with self._lock:
            self._time += seconds

    def advance_to(self, target: float) -> None:
        with self._lock:
            if target < self._time:
                raise ValueError(
                    f"cannot rewind clock from {self._time} to {target}"
                )
            self._time = float(target)
