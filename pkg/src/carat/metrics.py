"""Client-local metrics: six per-direction signals per probe interval,
consecutive-interval deltas, and I/O-active/inactive phase detection.

Zero-RPC intervals carry a validity flag rather than NaNs; latency and
volume attribute an RPC to the interval of its completion so byte
conservation against the server log is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

PAGE_SIZE = 4096

METRIC_FIELDS = ("page_util", "channel_util", "unit_latency", "volume")
WRITE_ONLY_FIELDS = ("dirty_util", "est_cache_update")


@dataclass
class DirectionCounters:
    """Raw per-direction counters accumulated by a client over one interval."""

    rpcs_departed: int = 0
    pages_departed: int = 0
    rpcs_completed: int = 0
    pages_completed: int = 0
    bytes_completed: int = 0
    latency_us_sum: int = 0  # sum of (completed_at - departed_at) over completions
    inflight_integral: int = 0  # integral of |inflight| dt, microsecond-weighted
    pressure_rpcs: int = 0

    def reset(self) -> None:
        self.rpcs_departed = 0
        self.pages_departed = 0
        self.rpcs_completed = 0
        self.pages_completed = 0
        self.bytes_completed = 0
        self.latency_us_sum = 0
        self.inflight_integral = 0
        self.pressure_rpcs = 0


@dataclass
class ClientCounters:
    """All per-interval counters plus run totals for one client."""

    read: DirectionCounters = field(default_factory=DirectionCounters)
    write: DirectionCounters = field(default_factory=DirectionCounters)
    requests: int = 0
    admitted_write_bytes: int = 0  # application bytes accepted into cache this interval
    new_dirty_bytes: int = 0
    inplace_bytes: int = 0
    max_dirty_bytes: int = 0
    read_returned_bytes: int = 0  # application bytes delivered to readers this interval

    # Run totals (never reset; conservation checks).
    total_admitted_write_bytes: int = 0
    total_inplace_bytes: int = 0
    total_completed_write_bytes: int = 0
    total_completed_read_bytes: int = 0
    total_requests: int = 0

    # Accumulators for the cache allocator, covering the current active stage.
    stage_write_rpc_bytes: int = 0
    stage_max_dirty_bytes: int = 0
    stage_max_inflight_write_bytes: int = 0
    stage_had_requests: bool = False

    def reset_interval(self, current_dirty: int) -> None:
        self.read.reset()
        self.write.reset()
        self.requests = 0
        self.admitted_write_bytes = 0
        self.new_dirty_bytes = 0
        self.inplace_bytes = 0
        self.max_dirty_bytes = current_dirty
        self.read_returned_bytes = 0

    def reset_stage(self, current_dirty: int) -> None:
        self.stage_write_rpc_bytes = 0
        self.stage_max_dirty_bytes = current_dirty
        self.stage_max_inflight_write_bytes = 0
        self.stage_had_requests = False


@dataclass(frozen=True)
class DirectionMetrics:
    page_util: float = 0.0
    channel_util: float = 0.0
    unit_latency: float = 0.0  # us per page, over RPCs completed in the interval
    volume: int = 0  # payload bytes of RPCs completed in the interval
    valid: bool = False  # False when no RPC completed in the interval
    pressure_rpcs: int = 0


@dataclass(frozen=True)
class MetricSnapshot:
    interval_start: int
    interval_end: int
    requests: int
    read: DirectionMetrics
    write: DirectionMetrics
    dirty_util: float  # write only: max dirty bytes in interval / limit
    est_cache_update: int  # write only: bytes absorbed in-place, estimated
    # Deltas (current - previous); all zero for the first snapshot.
    d_read_page_util: float = 0.0
    d_read_channel_util: float = 0.0
    d_read_unit_latency: float = 0.0
    d_read_volume: int = 0
    d_write_page_util: float = 0.0
    d_write_channel_util: float = 0.0
    d_write_unit_latency: float = 0.0
    d_write_volume: int = 0
    d_dirty_util: float = 0.0
    d_est_cache_update: int = 0
    # Configuration in force at snapshot time.
    pages_per_rpc: int = 1024
    rpcs_in_flight: int = 8
    max_dirty_mb: int = 256


def _direction_metrics(
    c: DirectionCounters, interval_us: int, pages_per_rpc: int, rpcs_in_flight: int
) -> DirectionMetrics:
    if c.rpcs_departed > 0:
        page_util = (c.pages_departed / c.rpcs_departed) / pages_per_rpc
    else:
        page_util = 0.0
    channel_util = (c.inflight_integral / interval_us) / rpcs_in_flight
    if c.pages_completed > 0:
        unit_latency = c.latency_us_sum / c.pages_completed
        valid = True
    else:
        unit_latency = 0.0
        valid = False
    return DirectionMetrics(
        page_util=page_util,
        channel_util=channel_util,
        unit_latency=unit_latency,
        volume=c.bytes_completed,
        valid=valid,
        pressure_rpcs=c.pressure_rpcs,
    )


def estimated_cache_update(
    admitted_write_bytes: int, rpc_drain_bytes: int, dirty_delta_bytes: int
) -> int:
    """Bytes absorbed by in-place updates: admitted minus drain minus cache delta."""
    return max(0, admitted_write_bytes - rpc_drain_bytes - dirty_delta_bytes)


def take_snapshot(
    counters: ClientCounters,
    interval_start: int,
    interval_end: int,
    dirty_delta_bytes: int,
    pages_per_rpc: int,
    rpcs_in_flight: int,
    max_dirty_mb: int,
    previous: Optional[MetricSnapshot] = None,
) -> MetricSnapshot:
    interval_us = interval_end - interval_start
    if interval_us <= 0:
        raise ValueError("snapshot interval must have positive length")
    read = _direction_metrics(counters.read, interval_us, pages_per_rpc, rpcs_in_flight)
    write = _direction_metrics(counters.write, interval_us, pages_per_rpc, rpcs_in_flight)
    dirty_util = counters.max_dirty_bytes / (max_dirty_mb * 1024 * 1024)
    est_update = estimated_cache_update(
        counters.admitted_write_bytes, counters.write.bytes_completed, dirty_delta_bytes
    )
    snap = MetricSnapshot(
        interval_start=interval_start,
        interval_end=interval_end,
        requests=counters.requests,
        read=read,
        write=write,
        dirty_util=dirty_util,
        est_cache_update=est_update,
        pages_per_rpc=pages_per_rpc,
        rpcs_in_flight=rpcs_in_flight,
        max_dirty_mb=max_dirty_mb,
    )
    if previous is not None:
        snap = replace(
            snap,
            d_read_page_util=read.page_util - previous.read.page_util,
            d_read_channel_util=read.channel_util - previous.read.channel_util,
            d_read_unit_latency=read.unit_latency - previous.read.unit_latency,
            d_read_volume=read.volume - previous.read.volume,
            d_write_page_util=write.page_util - previous.write.page_util,
            d_write_channel_util=write.channel_util - previous.write.channel_util,
            d_write_unit_latency=write.unit_latency - previous.write.unit_latency,
            d_write_volume=write.volume - previous.write.volume,
            d_dirty_util=dirty_util - previous.dirty_util,
            d_est_cache_update=est_update - previous.est_cache_update,
        )
    return snap


@dataclass
class SnapshotPair:
    """The k=1 history window: at most two snapshots live per client."""

    previous: Optional[MetricSnapshot] = None
    current: Optional[MetricSnapshot] = None

    def push(self, snap: MetricSnapshot) -> None:
        self.previous = self.current
        self.current = snap


@dataclass
class ActivityPhase:
    active: bool = False
    inactive_since: Optional[int] = 0  # set when entering the inactive state


def update_phase(
    phase: ActivityPhase,
    requests_in_window: int,
    now: int,
    min_inactive_us: int = 1_000_000,
) -> tuple[ActivityPhase, bool]:
    """Advance the I/O-activity state machine at a probe tick.

    Returns the new phase and whether this tick is a cache-tune boundary:
    an Inactive->Active transition after an inactive span > min_inactive_us.
    """
    if requests_in_window > 0:
        boundary = (
            not phase.active
            and phase.inactive_since is not None
            and (now - phase.inactive_since) > min_inactive_us
        )
        return ActivityPhase(active=True, inactive_since=None), boundary
    if phase.active:
        return ActivityPhase(active=False, inactive_since=now), False
    return phase, False
