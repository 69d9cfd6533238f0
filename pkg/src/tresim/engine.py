"""Deterministic discrete-event kernel: integer virtual clock, ordered event queue, run loop."""

from __future__ import annotations

import heapq
import time as _wallclock
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional


class EventKind(IntEnum):
    """Event kinds; the integer value is the tie-break rank at equal timestamps.

    Lifecycle creation fires first so a TRE is running before same-instant
    arrivals reach it. Finishes precede scans so a scan sees nodes freed at
    the same instant; arrivals come after scans; timers and destruction last.
    """

    TRE_CREATE = 0
    JOB_FINISH = 1
    SCAN_TICK = 2
    JOB_ARRIVAL = 3
    IDLE_CHECK_TICK = 4
    LEASE_EXPIRY_BOUNDARY = 5
    TRE_DESTROY = 6


@dataclass(frozen=True, order=True)
class Event:
    time: int
    rank: int
    seq: int
    kind: EventKind = field(compare=False)
    tre: Optional[str] = field(default=None, compare=False)
    job: Optional[int] = field(default=None, compare=False)
    data: object = field(default=None, compare=False)


class SimulationError(RuntimeError):
    """A logic error inside a run; the run is aborted."""


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.clock = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: int, kind: EventKind, tre: str | None = None, job: int | None = None,
             data: object = None) -> Event:
        if time < self.clock:
            raise SimulationError(f"event {kind.name} at t={time} is before clock {self.clock}")
        ev = Event(int(time), int(kind), self._seq, kind, tre, job, data)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop_next(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.clock = ev.time
        return ev

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None


@dataclass(frozen=True)
class SpeedupFactor:
    factor: int = 100

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError("speed-up factor must be >= 1")


Handler = Callable[[Event], None]


class Simulator:
    """Run loop dispatching events to per-kind handlers.

    Time is virtual. ``pace`` turns on optional wall-clock pacing at
    ``speedup`` times real speed; it never changes the simulated timeline.
    """

    def __init__(self, livelock_limit: int = 10**6, trace: bool = False,
                 speedup: SpeedupFactor = SpeedupFactor(), pace: bool = False):
        self.queue = EventQueue()
        self.handlers: dict[EventKind, Handler] = {}
        self.livelock_limit = livelock_limit
        self.speedup = speedup
        self.pace = pace
        self.trace_enabled = trace
        self.trace: list[tuple] = []
        self.cancelled: set[int] = set()
        self.events_processed = 0

    @property
    def now(self) -> int:
        return self.queue.clock

    def on(self, kind: EventKind, handler: Handler) -> None:
        self.handlers[kind] = handler

    def schedule(self, time: int, kind: EventKind, tre: str | None = None, job: int | None = None,
                 data: object = None) -> Event:
        return self.queue.push(time, kind, tre, job, data)

    def cancel(self, ev: Event) -> None:
        self.cancelled.add(ev.seq)

    def record(self, kind: str, tre: str | None, job: int | None, delta: int | None = None) -> None:
        if self.trace_enabled:
            self.trace.append((self.now, kind, tre, job, delta))

    def run(self, until: int | None = None) -> int:
        """Process events until the queue drains (or the clock passes ``until``)."""
        stalled = 0
        last = None
        wall0 = _wallclock.monotonic()
        while self.queue:
            nxt = self.queue.peek()
            if until is not None and nxt.time > until:
                break
            ev = self.queue.pop_next()
            if ev.seq in self.cancelled:
                self.cancelled.discard(ev.seq)
                continue
            if ev.time == last:
                stalled += 1
                if stalled > self.livelock_limit:
                    raise SimulationError(
                        f"clock stuck at t={ev.time} for {stalled} events (last {ev.kind.name})")
            else:
                stalled = 0
                last = ev.time
            if self.pace:
                target = wall0 + ev.time / self.speedup.factor
                delay = target - _wallclock.monotonic()
                if delay > 0:
                    _wallclock.sleep(delay)
            handler = self.handlers.get(ev.kind)
            if handler is None:
                raise SimulationError(f"no handler for {ev.kind.name}")
            self.events_processed += 1
            handler(ev)
        return self.now

    def dump_trace(self) -> str:
        rows = []
        for t, kind, tre, job, delta in self.trace:
            rows.append("\t".join("" if v is None else str(v) for v in (t, kind, tre, job, delta)))
        return "\n".join(rows) + ("\n" if rows else "")
