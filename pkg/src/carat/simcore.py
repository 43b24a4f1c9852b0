"""Deterministic discrete-event engine: virtual clock, ordered queue, seeded RNG streams.

Time is integer microseconds. Events with equal fire times are processed in
scheduling (seq) order, so a run is a pure function of (seed, config, workload).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

US_PER_SECOND = 1_000_000

# FNV-1a constants for the streaming event-log fingerprint.
_FNV_PRIME = 1099511628211
_FNV_MASK = (1 << 64) - 1


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


class EventKind(enum.IntEnum):
    REQUEST_ARRIVAL = 0
    EXTENT_TIMEOUT = 1
    RPC_DEPARTURE = 2
    RPC_SERVICE_COMPLETE = 3
    RPC_CLIENT_COMPLETE = 4
    PROBE_TICK = 5
    PHASE_SWITCH = 6


@dataclass(slots=True)
class Event:
    fire_at: int
    kind: EventKind
    payload: Any = None
    seq: int = -1  # assigned by the queue


class EventHandle:
    """Permits cancellation of a pending event (used for extent timeouts)."""

    __slots__ = ("event", "cancelled", "fired")

    def __init__(self, event: Event):
        self.event = event
        self.cancelled = False
        self.fired = False

    @property
    def pending(self) -> bool:
        return not (self.cancelled or self.fired)


class EventQueue:
    """Binary-heap event queue with FIFO tie-break and O(1) cancellation."""

    def __init__(self, handler: Optional[Callable[[Event], None]] = None):
        self._heap: list[tuple[int, int, EventHandle]] = []
        self._handler = handler
        self.now: int = 0
        self._seq = 0
        self.scheduled = 0
        self.processed = 0
        self.cancelled = 0
        # Streaming FNV-1a style fingerprint of (fire_at, seq, kind) triples.
        self.log_fingerprint: int = 1469598103934665603

    def set_handler(self, handler: Callable[[Event], None]) -> None:
        self._handler = handler

    @property
    def pending(self) -> int:
        return self.scheduled - self.processed - self.cancelled

    def schedule(self, event: Event) -> EventHandle:
        if event.fire_at < self.now:
            raise SchedulingError(
                f"event {event.kind.name} scheduled at t={event.fire_at} "
                f"in the past (clock={self.now})"
            )
        event.seq = self._seq
        self._seq += 1
        handle = EventHandle(event)
        import heapq

        heapq.heappush(self._heap, (event.fire_at, event.seq, handle))
        self.scheduled += 1
        return handle

    def schedule_at(self, fire_at: int, kind: EventKind, payload: Any = None) -> EventHandle:
        return self.schedule(Event(fire_at, kind, payload))

    def cancel(self, handle: EventHandle) -> bool:
        if not handle.pending:
            return False
        handle.cancelled = True
        self.cancelled += 1
        return True

    def _fingerprint(self, event: Event) -> None:
        h = self.log_fingerprint
        for v in (event.fire_at, event.seq, int(event.kind)):
            h = ((h ^ (v & _FNV_MASK)) * _FNV_PRIME) & _FNV_MASK
        self.log_fingerprint = h

    def run_until(self, t_end: int) -> int:
        """Process every event with fire_at <= t_end; leave clock at t_end."""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) behind clock {self.now}")
        import heapq

        count = 0
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            fire_at, _, handle = heapq.heappop(heap)
            if handle.cancelled:
                continue
            handle.fired = True
            self.now = fire_at
            self.processed += 1
            count += 1
            self._fingerprint(handle.event)
            self._handler(handle.event)
        self.now = t_end
        return count

    def run_to_exhaustion(self, hard_limit: Optional[int] = None) -> int:
        """Process events until the queue drains (or hard_limit is hit)."""
        import heapq

        count = 0
        heap = self._heap
        while heap:
            fire_at, _, handle = heapq.heappop(heap)
            if handle.cancelled:
                continue
            if hard_limit is not None and fire_at > hard_limit:
                # Leave the event unprocessed; restore and stop.
                heapq.heappush(heap, (fire_at, handle.event.seq, handle))
                self.now = hard_limit
                return count
            handle.fired = True
            self.now = fire_at
            self.processed += 1
            count += 1
            self._fingerprint(handle.event)
            self._handler(handle.event)
        return count


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent RNG sub-stream for one (client/server/stream) identity.

    Derived from the master seed and a structural key, so adding a client does
    not perturb any other client's randomness.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))
