"""Minimal deterministic discrete-event scheduler.

Activities are plain generators that yield commands: ``Timeout`` to let
simulated time pass, ``Acquire``/``Release`` to serialize on a shared
``Resource`` (the production cell has exactly one robot), and
``Wait``/``Fire`` on a ``Signal`` for one-shot triggers between activities.
Events at equal times run in scheduling order, so a run is a pure function
of its inputs and event logs replay byte-identically.

The scheduler drives a shared clock forward as it executes, which keeps
simulated devices reading the same clock (the mock print server) in step
with the activities.  With a real clock the same event loop turns into a
wall-clock sleep schedule.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Generator

from .clock import Clock

__all__ = [
    "Acquire",
    "Fire",
    "Process",
    "Release",
    "Resource",
    "Scheduler",
    "Signal",
    "Timeout",
    "Wait",
]

Activity = Generator["Timeout | Acquire | Release | Wait | Fire", None, Any]


@dataclass(frozen=True)
class Timeout:
    delay: float

    def __post_init__(self) -> None:
        if self.delay < 0:
            raise ValueError(f"negative timeout: {self.delay}")


class Resource:
    """Exclusive resource with a FIFO wait queue."""

    def __init__(self, name: str) -> None:
        self.name = name
        self.owner: "Process | None" = None
        self.waiters: deque["Process"] = deque()

    def __repr__(self) -> str:
        return f"Resource({self.name!r})"


@dataclass(frozen=True)
class Acquire:
    resource: Resource


@dataclass(frozen=True)
class Release:
    resource: Resource


class Signal:
    """One-shot broadcast: waiters resume once fired; late waits pass through."""

    def __init__(self, name: str) -> None:
        self.name = name
        self.fired = False
        self.waiters: list["Process"] = []

    def __repr__(self) -> str:
        return f"Signal({self.name!r}, fired={self.fired})"


@dataclass(frozen=True)
class Wait:
    signal: Signal


@dataclass(frozen=True)
class Fire:
    signal: Signal


@dataclass
class Process:
    """Handle for a spawned activity."""

    name: str
    generator: Activity = field(repr=False)
    done: bool = False
    result: Any = None

    def finish(self, value: Any) -> None:
        self.done = True
        self.result = value


class Scheduler:
    def __init__(self, clock: Clock) -> None:
        self.clock = clock
        self._heap: list[tuple[float, int, Process]] = []
        self._seq = 0

    def spawn(self, activity: Activity, name: str = "activity") -> Process:
        """Register an activity to start at the current time."""
        process = Process(name=name, generator=activity)
        self._schedule(self.clock.now(), process)
        return process

    def run(self) -> None:
        """Execute events until no work remains.

        An exception inside an activity propagates to the caller; domain
        failures are expected to be encoded in activity results instead.
        """
        while self._heap:
            when, _, process = heapq.heappop(self._heap)
            self.clock.advance_to(when)
            self._step(process)

    def _schedule(self, when: float, process: Process) -> None:
        heapq.heappush(self._heap, (when, self._seq, process))
        self._seq += 1

    def _step(self, process: Process) -> None:
        try:
            command = next(process.generator)
        except StopIteration as stop:
            process.finish(stop.value)
            return
        now = self.clock.now()
        if isinstance(command, Timeout):
            self._schedule(now + command.delay, process)
        elif isinstance(command, Acquire):
            resource = command.resource
            if resource.owner is None:
                resource.owner = process
                self._schedule(now, process)
            else:
                resource.waiters.append(process)
        elif isinstance(command, Release):
            resource = command.resource
            if resource.owner is not process:
                raise RuntimeError(
                    f"{process.name} released {resource.name} without owning it"
                )
            self._schedule(now, process)
            if resource.waiters:
                resource.owner = resource.waiters.popleft()
                self._schedule(now, resource.owner)
            else:
                resource.owner = None
        elif isinstance(command, Wait):
            if command.signal.fired:
                self._schedule(now, process)
            else:
                command.signal.waiters.append(process)
        elif isinstance(command, Fire):
            signal = command.signal
            signal.fired = True
            self._schedule(now, process)
            for waiter in signal.waiters:
                self._schedule(now, waiter)
            signal.waiters.clear()
        else:
            raise TypeError(f"activity yielded unsupported command {command!r}")
