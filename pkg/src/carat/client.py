"""One simulated PFS I/O client (one OSC-equivalent per target OST).

Models dirty-page admission, fixed-size RPC extent formation, the three
write dispatch triggers (extent full, wait-threshold expiry, cache
pressure), the read split path, and the in-flight concurrency window.
Pressure-triggered RPCs bypass the window, mirroring priority cache-waiter
issuance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from .metrics import PAGE_SIZE, ClientCounters
from .server import Ost
from .simcore import EventKind, EventQueue

PAGES_PER_RPC_CHOICES = (16, 32, 64, 128, 256, 512, 1024)
RPCS_IN_FLIGHT_CHOICES = (1, 2, 4, 8, 16, 32, 64, 128, 256)
CACHE_MB_CHOICES = (32, 64, 128, 256, 512, 1024, 2048)

CACHE_MB_MIN = CACHE_MB_CHOICES[0]
CACHE_MB_MAX = CACHE_MB_CHOICES[-1]

DEFAULT_T_WAIT_US = 1_000_000

TRIGGER_FULL = "full"
TRIGGER_TIMEOUT = "timeout"
TRIGGER_PRESSURE = "pressure"
TRIGGER_READ = "read"


@dataclass(frozen=True)
class RpcConfig:
    pages_per_rpc: int = 1024
    rpcs_in_flight: int = 8

    def __post_init__(self):
        if self.pages_per_rpc not in PAGES_PER_RPC_CHOICES:
            raise ValueError(f"pages_per_rpc {self.pages_per_rpc} not in {PAGES_PER_RPC_CHOICES}")
        if self.rpcs_in_flight not in RPCS_IN_FLIGHT_CHOICES:
            raise ValueError(
                f"rpcs_in_flight {self.rpcs_in_flight} not in {RPCS_IN_FLIGHT_CHOICES}"
            )


@dataclass(frozen=True)
class CacheConfig:
    max_dirty_mb: int = 256

    def __post_init__(self):
        if self.max_dirty_mb not in CACHE_MB_CHOICES:
            raise ValueError(f"max_dirty_mb {self.max_dirty_mb} not in {CACHE_MB_CHOICES}")

    @property
    def limit_bytes(self) -> int:
        return self.max_dirty_mb * 1024 * 1024


@dataclass
class Extent:
    file_id: int
    extent_index: int
    created_at: int
    pages: set = field(default_factory=set)
    timeout_handle: Any = None


@dataclass(eq=False)
class Rpc:
    direction: str  # "read" | "write"
    pages: int
    trigger: str
    formed_at: int
    client_id: int = -1
    ost_id: int = -1
    departed_at: int = -1
    completed_at: int = -1
    token: Any = None  # opaque request record for read completions

    @property
    def payload_bytes(self) -> int:
        return self.pages * PAGE_SIZE

    @property
    def is_pressure(self) -> bool:
        return self.trigger == TRIGGER_PRESSURE


@dataclass
class BlockedWrite:
    file_id: int
    next_page: int
    end_page: int
    token: Any = None


class Client:
    """ClientState plus its operations; owned by a single simulation run."""

    def __init__(
        self,
        client_id: int,
        node_id: int,
        ost: Ost,
        engine: EventQueue,
        rpc_config: RpcConfig = RpcConfig(),
        cache_config: CacheConfig = CacheConfig(),
        t_wait_us: int = DEFAULT_T_WAIT_US,
        on_write_admitted: Optional[Callable[[Any, int], None]] = None,
        on_read_complete: Optional[Callable[[Any, int, int], None]] = None,
    ):
        self.client_id = client_id
        self.node_id = node_id
        self.ost = ost
        self.engine = engine
        self.rpc_config = rpc_config
        self.cache_config = cache_config
        self.t_wait_us = t_wait_us
        self.on_write_admitted = on_write_admitted
        self.on_read_complete = on_read_complete

        self.dirty_bytes = 0
        self.open_extents: dict[tuple[int, int], Extent] = {}  # insertion = creation order
        self.inflight: set[Rpc] = set()
        self.pending: deque[Rpc] = deque()
        self.blocked_writers: deque[BlockedWrite] = deque()
        self.counters = ClientCounters()

        self._inflight_read = 0
        self._inflight_write = 0
        self._inflight_write_bytes = 0
        self._last_inflight_touch = 0

    # -- accounting -----------------------------------------------------

    def _touch_inflight(self, now: int) -> None:
        dt = now - self._last_inflight_touch
        if dt > 0:
            self.counters.read.inflight_integral += self._inflight_read * dt
            self.counters.write.inflight_integral += self._inflight_write * dt
            self._last_inflight_touch = now

    def flush_inflight_integral(self, now: int) -> None:
        """Close the integral at an interval boundary before snapshotting."""
        self._touch_inflight(now)

    def _note_dirty_high_water(self) -> None:
        if self.dirty_bytes > self.counters.max_dirty_bytes:
            self.counters.max_dirty_bytes = self.dirty_bytes
        if self.dirty_bytes > self.counters.stage_max_dirty_bytes:
            self.counters.stage_max_dirty_bytes = self.dirty_bytes

    def note_request(self) -> None:
        self.counters.requests += 1
        self.counters.total_requests += 1
        self.counters.stage_had_requests = True

    # -- write path -----------------------------------------------------

    def admit_write(
        self,
        file_id: int,
        offset: int,
        length: int,
        now: int,
        in_place_hit: bool = False,
        token: Any = None,
    ) -> bool:
        """Buffer a write into dirty-page extents; returns True when fully admitted.

        Pages already dirty in an open extent are rewritten in place at zero
        cache cost (the in_place_hit flag is the workload generator's intent;
        actual absorption is decided by cache state, which is what makes the
        dirty limit govern in-place effectiveness). If the cache limit blocks
        a page, the remainder parks on blocked_writers and a pressure flush is
        triggered; admission resumes as completions free bytes.
        """
        if length <= 0:
            raise ValueError("write length must be positive")
        first = offset // PAGE_SIZE
        last = (offset + length - 1) // PAGE_SIZE
        done = self._admit_pages(file_id, first, last + 1, now, token)
        self.maybe_dispatch(now)
        return done

    def admit_write_pages(
        self,
        file_id: int,
        start_page: int,
        end_page: int,
        now: int,
        in_place_hint: bool = False,
        token: Any = None,
    ) -> bool:
        """Page-run admission entry used by the node router; same semantics
        as admit_write."""
        done = self._admit_pages(file_id, start_page, end_page, now, token)
        self.maybe_dispatch(now)
        return done

    def _admit_pages(self, file_id: int, start: int, end: int, now: int, token: Any) -> bool:
        limit = self.cache_config.limit_bytes
        ppr = self.rpc_config.pages_per_rpc
        page = start
        while page < end:
            eidx = page // ppr
            key = (file_id, eidx)
            ext = self.open_extents.get(key)
            if ext is not None and page in ext.pages:
                # In-place rewrite of a still-dirty page: no new bytes, no new RPC bytes.
                self.counters.admitted_write_bytes += PAGE_SIZE
                self.counters.total_admitted_write_bytes += PAGE_SIZE
                self.counters.inplace_bytes += PAGE_SIZE
                self.counters.total_inplace_bytes += PAGE_SIZE
                page += 1
                continue
            if self.dirty_bytes + PAGE_SIZE > limit:
                self.blocked_writers.append(BlockedWrite(file_id, page, end, token))
                self._pressure_flush(PAGE_SIZE, now)
                return False
            if ext is None:
                ext = Extent(file_id=file_id, extent_index=eidx, created_at=now)
                ext.timeout_handle = self.engine.schedule_at(
                    now + self.t_wait_us, EventKind.EXTENT_TIMEOUT, (self, key)
                )
                self.open_extents[key] = ext
            ext.pages.add(page)
            self.dirty_bytes += PAGE_SIZE
            self.counters.admitted_write_bytes += PAGE_SIZE
            self.counters.total_admitted_write_bytes += PAGE_SIZE
            self.counters.new_dirty_bytes += PAGE_SIZE
            self._note_dirty_high_water()
            if len(ext.pages) == ppr:
                self._seal_extent(key, TRIGGER_FULL, now)
            page += 1
        return True

    def _seal_extent(self, key: tuple[int, int], trigger: str, now: int) -> Rpc:
        ext = self.open_extents.pop(key)
        if ext.timeout_handle is not None:
            self.engine.cancel(ext.timeout_handle)
        rpc = Rpc(
            direction="write",
            pages=len(ext.pages),
            trigger=trigger,
            formed_at=now,
            client_id=self.client_id,
            ost_id=self.ost.ost_id,
        )
        if trigger == TRIGGER_PRESSURE:
            self._dispatch(rpc, now)  # cache-waiters bypass the window
        else:
            self.pending.append(rpc)
        return rpc

    def on_extent_timeout(self, key: tuple[int, int], now: int) -> None:
        if key in self.open_extents:
            self._seal_extent(key, TRIGGER_TIMEOUT, now)
            self.maybe_dispatch(now)

    def _pressure_flush(self, needed_bytes: int, now: int) -> int:
        """Seal open extents in oldest-created order until enough bytes are en route."""
        sealed = 0
        while sealed < needed_bytes and self.open_extents:
            key = next(iter(self.open_extents))
            rpc = self._seal_extent(key, TRIGGER_PRESSURE, now)
            sealed += rpc.payload_bytes
        return sealed

    # -- read path ------------------------------------------------------

    def admit_read(
        self, file_id: int, offset: int, length: int, now: int, token: Any = None
    ) -> list[Rpc]:
        """Split a contiguous read into per-extent RPCs of at most pages_per_rpc pages."""
        if length <= 0:
            raise ValueError("read length must be positive")
        first = offset // PAGE_SIZE
        last = (offset + length - 1) // PAGE_SIZE
        ppr = self.rpc_config.pages_per_rpc
        rpcs = []
        page = first
        while page <= last:
            eidx = page // ppr
            chunk_end = min(last, (eidx + 1) * ppr - 1)
            rpcs.append(self.add_read_rpc(chunk_end - page + 1, now, token))
            page = chunk_end + 1
        self.maybe_dispatch(now)
        return rpcs

    def add_read_rpc(self, pages: int, now: int, token: Any = None) -> Rpc:
        rpc = Rpc(
            direction="read",
            pages=pages,
            trigger=TRIGGER_READ,
            formed_at=now,
            client_id=self.client_id,
            ost_id=self.ost.ost_id,
            token=token,
        )
        self.pending.append(rpc)
        return rpc

    # -- dispatch and completion ----------------------------------------

    def maybe_dispatch(self, now: int) -> int:
        departed = 0
        window = self.rpc_config.rpcs_in_flight
        while self.pending and len(self.inflight) < window:
            self._dispatch(self.pending.popleft(), now)
            departed += 1
        return departed

    def _dispatch(self, rpc: Rpc, now: int) -> None:
        self._touch_inflight(now)
        rpc.departed_at = now
        self.inflight.add(rpc)
        if rpc.direction == "read":
            self._inflight_read += 1
            c = self.counters.read
        else:
            self._inflight_write += 1
            self._inflight_write_bytes += rpc.payload_bytes
            if self._inflight_write_bytes > self.counters.stage_max_inflight_write_bytes:
                self.counters.stage_max_inflight_write_bytes = self._inflight_write_bytes
            c = self.counters.write
        c.rpcs_departed += 1
        c.pages_departed += rpc.pages
        if rpc.is_pressure:
            c.pressure_rpcs += 1
        completion_at = self.ost.enqueue_rpc(
            rpc.pages, rpc.payload_bytes, now + self.ost.params.d_net_us, rpc.direction == "read"
        )
        self.engine.schedule_at(completion_at, EventKind.RPC_CLIENT_COMPLETE, (self, rpc))

    def on_rpc_complete(self, rpc: Rpc, now: int) -> int:
        if rpc not in self.inflight:
            raise RuntimeError(f"completion for unknown RPC {rpc}")
        self._touch_inflight(now)
        self.inflight.remove(rpc)
        rpc.completed_at = now
        released = 0
        if rpc.direction == "read":
            self._inflight_read -= 1
            c = self.counters.read
            self.counters.read_returned_bytes += rpc.payload_bytes
            self.counters.total_completed_read_bytes += rpc.payload_bytes
        else:
            self._inflight_write -= 1
            self._inflight_write_bytes -= rpc.payload_bytes
            released = rpc.payload_bytes
            self.dirty_bytes -= released
            c = self.counters.write
            self.counters.total_completed_write_bytes += rpc.payload_bytes
            self.counters.stage_write_rpc_bytes += rpc.payload_bytes
        c.rpcs_completed += 1
        c.pages_completed += rpc.pages
        c.bytes_completed += rpc.payload_bytes
        c.latency_us_sum += rpc.completed_at - rpc.departed_at
        if rpc.direction == "write":
            self._retry_blocked(now)
        elif self.on_read_complete is not None:
            self.on_read_complete(rpc.token, rpc.payload_bytes, now)
        self.maybe_dispatch(now)
        return released

    def _retry_blocked(self, now: int) -> None:
        while self.blocked_writers:
            bw = self.blocked_writers[0]
            limit = self.cache_config.limit_bytes
            if self.dirty_bytes + PAGE_SIZE > limit:
                return
            self.blocked_writers.popleft()
            done = self._admit_pages(bw.file_id, bw.next_page, bw.end_page, now, bw.token)
            if done and self.on_write_admitted is not None:
                self.on_write_admitted(bw.token, now)
            if not done:
                return  # re-parked by _admit_pages

    # -- configuration --------------------------------------------------

    def apply_rpc_config(self, new: RpcConfig, now: int) -> RpcConfig:
        """Reconfigure RPC geometry/window; in-flight RPCs are unaffected.

        A pages_per_rpc change seals open extents at the old geometry (they
        dispatch through the normal window); reapplying the same config is a
        no-op.
        """
        if new == self.rpc_config:
            return self.rpc_config
        if new.pages_per_rpc != self.rpc_config.pages_per_rpc:
            for key in list(self.open_extents):
                self._seal_extent(key, TRIGGER_TIMEOUT, now)
        self.rpc_config = new
        self.maybe_dispatch(now)
        return self.rpc_config

    def apply_cache_config(self, new: CacheConfig, now: int) -> CacheConfig:
        """Change the dirty-cache limit; dirty pages are never dropped.

        Shrinking below the current dirty level force-flushes oldest extents;
        growing retries blocked writers immediately.
        """
        if new == self.cache_config:
            return self.cache_config
        self.cache_config = new
        excess = self.dirty_bytes - new.limit_bytes
        if excess > 0:
            self._pressure_flush(excess, now)
        else:
            self._retry_blocked(now)
        self.maybe_dispatch(now)
        return self.cache_config
