"""Offline parsers and the dry-run advisory path.

The carat-trace format is a CSV dialect with a two-line header (version
line, column line) holding one metric snapshot per probe interval together
with the configuration in force. advise() replays the live stage-1 decision
core over such a trace without actuating anything, which is how real-system
data can exercise the tuner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .metrics import ActivityPhase, DirectionMetrics, MetricSnapshot, update_phase
from .tuner import TuneDecision, TunerParams, default_space, stage1_decision

TRACE_VERSION = 1

TRACE_COLUMNS = (
    "t_start_us",
    "t_end_us",
    "requests",
    "r_page_util",
    "r_channel_util",
    "r_unit_latency",
    "r_volume",
    "r_valid",
    "r_pressure_rpcs",
    "w_page_util",
    "w_channel_util",
    "w_unit_latency",
    "w_volume",
    "w_valid",
    "w_pressure_rpcs",
    "dirty_util",
    "est_cache_update",
    "d_r_page_util",
    "d_r_channel_util",
    "d_r_unit_latency",
    "d_r_volume",
    "d_w_page_util",
    "d_w_channel_util",
    "d_w_unit_latency",
    "d_w_volume",
    "d_dirty_util",
    "d_est_cache_update",
    "pages_per_rpc",
    "rpcs_in_flight",
    "max_dirty_mb",
)


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CaratTrace:
    client_id: int
    probe_interval_us: int
    snapshots: tuple[MetricSnapshot, ...]


def snapshot_to_row(s: MetricSnapshot) -> list[str]:
    return [
        str(s.interval_start),
        str(s.interval_end),
        str(s.requests),
        repr(s.read.page_util),
        repr(s.read.channel_util),
        repr(s.read.unit_latency),
        str(s.read.volume),
        str(int(s.read.valid)),
        str(s.read.pressure_rpcs),
        repr(s.write.page_util),
        repr(s.write.channel_util),
        repr(s.write.unit_latency),
        str(s.write.volume),
        str(int(s.write.valid)),
        str(s.write.pressure_rpcs),
        repr(s.dirty_util),
        str(s.est_cache_update),
        repr(s.d_read_page_util),
        repr(s.d_read_channel_util),
        repr(s.d_read_unit_latency),
        str(s.d_read_volume),
        repr(s.d_write_page_util),
        repr(s.d_write_channel_util),
        repr(s.d_write_unit_latency),
        str(s.d_write_volume),
        repr(s.d_dirty_util),
        str(s.d_est_cache_update),
        str(s.pages_per_rpc),
        str(s.rpcs_in_flight),
        str(s.max_dirty_mb),
    ]


def _row_to_snapshot(parts: list[str]) -> MetricSnapshot:
    read = DirectionMetrics(
        page_util=float(parts[3]),
        channel_util=float(parts[4]),
        unit_latency=float(parts[5]),
        volume=int(parts[6]),
        valid=bool(int(parts[7])),
        pressure_rpcs=int(parts[8]),
    )
    write = DirectionMetrics(
        page_util=float(parts[9]),
        channel_util=float(parts[10]),
        unit_latency=float(parts[11]),
        volume=int(parts[12]),
        valid=bool(int(parts[13])),
        pressure_rpcs=int(parts[14]),
    )
    return MetricSnapshot(
        interval_start=int(parts[0]),
        interval_end=int(parts[1]),
        requests=int(parts[2]),
        read=read,
        write=write,
        dirty_util=float(parts[15]),
        est_cache_update=int(parts[16]),
        d_read_page_util=float(parts[17]),
        d_read_channel_util=float(parts[18]),
        d_read_unit_latency=float(parts[19]),
        d_read_volume=int(parts[20]),
        d_write_page_util=float(parts[21]),
        d_write_channel_util=float(parts[22]),
        d_write_unit_latency=float(parts[23]),
        d_write_volume=int(parts[24]),
        d_dirty_util=float(parts[25]),
        d_est_cache_update=int(parts[26]),
        pages_per_rpc=int(parts[27]),
        rpcs_in_flight=int(parts[28]),
        max_dirty_mb=int(parts[29]),
    )


def serialize_carat_trace(trace: CaratTrace) -> str:
    lines = [
        f"carat-trace v{TRACE_VERSION} client={trace.client_id} "
        f"probe_interval_us={trace.probe_interval_us}",
        ",".join(TRACE_COLUMNS),
    ]
    for s in trace.snapshots:
        lines.append(",".join(snapshot_to_row(s)))
    return "\n".join(lines) + "\n"


def parse_carat_trace(text: str) -> CaratTrace:
    """Parse a trace document; failures name the offending line (1-based)."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise TraceFormatError("line 1: missing header")
    head = lines[0].split()
    if len(head) < 4 or head[0] != "carat-trace":
        raise TraceFormatError(f"line 1: not a carat-trace header: {lines[0]!r}")
    if head[1] != f"v{TRACE_VERSION}":
        raise TraceFormatError(
            f"line 1: trace version {head[1]} incompatible with v{TRACE_VERSION}"
        )
    meta = dict(kv.split("=", 1) for kv in head[2:] if "=" in kv)
    try:
        client_id = int(meta["client"])
        probe_us = int(meta["probe_interval_us"])
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"line 1: malformed header fields: {exc}")
    if len(lines) < 2 or lines[1].split(",") != list(TRACE_COLUMNS):
        raise TraceFormatError("line 2: column line does not match the v1 layout")
    snapshots = []
    last_end = None
    for i, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(TRACE_COLUMNS):
            raise TraceFormatError(
                f"line {i}: expected {len(TRACE_COLUMNS)} fields, found {len(parts)}"
            )
        try:
            snap = _row_to_snapshot(parts)
        except ValueError as exc:
            raise TraceFormatError(f"line {i}: {exc}")
        if last_end is not None and snap.interval_end <= last_end:
            raise TraceFormatError(f"line {i}: timestamp regression at {snap.interval_end}")
        last_end = snap.interval_end
        snapshots.append(snap)
    return CaratTrace(client_id, probe_us, tuple(snapshots))


def write_carat_trace(path, trace: CaratTrace) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_carat_trace(trace))


def read_carat_trace(path) -> CaratTrace:
    with open(path) as fh:
        return parse_carat_trace(fh.read())


# -- Lustre-style rpc_stats histograms ---------------------------------------


@dataclass(frozen=True)
class RpcStatsHistogram:
    """Bucketed pages-per-RPC and RPCs-in-flight counts, split read/write.

    Maps bucket -> (count, percent, cumulative percent).
    """

    pages_read: dict
    pages_write: dict
    flight_read: dict
    flight_write: dict

    def mean_pages(self, direction: str) -> Optional[float]:
        hist = self.pages_read if direction == "read" else self.pages_write
        total = sum(c for c, _, _ in hist.values())
        if total == 0:
            return None  # mean undefined on an all-zero histogram
        return sum(b * c for b, (c, _, _) in hist.items()) / total

    def mean_inflight(self, direction: str) -> Optional[float]:
        hist = self.flight_read if direction == "read" else self.flight_write
        total = sum(c for c, _, _ in hist.values())
        if total == 0:
            return None
        return sum(b * c for b, (c, _, _) in hist.items()) / total


def parse_rpc_stats(text: str) -> RpcStatsHistogram:
    """Parse the pages-per-rpc / rpcs-in-flight subset of an rpc_stats dump.

    Layout: a section header line ("pages per rpc" or "rpcs in flight"),
    then rows "bucket: r_count r_pct r_cum | w_count w_pct w_cum".
    """
    sections = {"pages per rpc": ({}, {}), "rpcs in flight": ({}, {})}
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        lowered = stripped.lower()
        matched = False
        for name in sections:
            if lowered.startswith(name):
                current = name
                matched = True
                break
        if matched:
            continue
        if ":" not in stripped:
            if current is None:
                continue  # preamble (snapshot_time etc.)
            raise TraceFormatError(f"line {i}: malformed histogram row: {line!r}")
        if current is None:
            continue
        bucket_s, rest = stripped.split(":", 1)
        try:
            bucket = int(bucket_s)
        except ValueError:
            raise TraceFormatError(f"line {i}: non-integer bucket {bucket_s!r}")
        if bucket <= 0 or bucket & (bucket - 1):
            raise TraceFormatError(f"line {i}: bucket {bucket} is not a power of two")
        halves = rest.split("|")
        if len(halves) != 2:
            raise TraceFormatError(f"line {i}: expected read|write triplets")
        triplets = []
        for half in halves:
            fields = half.split()
            if len(fields) != 3:
                raise TraceFormatError(f"line {i}: expected 3 fields per direction")
            try:
                triplets.append((int(fields[0]), float(fields[1]), float(fields[2])))
            except ValueError as exc:
                raise TraceFormatError(f"line {i}: {exc}")
        rd, wr = sections[current]
        rd[bucket] = triplets[0]
        wr[bucket] = triplets[1]
    pages_rd, pages_wr = sections["pages per rpc"]
    flight_rd, flight_wr = sections["rpcs in flight"]
    return RpcStatsHistogram(pages_rd, pages_wr, flight_rd, flight_wr)


# -- advisory replay ----------------------------------------------------------


@dataclass(frozen=True)
class Recommendation:
    time_us: int
    kind: str
    pages: int
    window: int
    top_probability: float
    score: float
    candidate_count: int


def advise(trace: CaratTrace, models: dict, params: TunerParams) -> list[Recommendation]:
    """Dry-run the stage-1 decision core over a trace: one recommendation per
    row after the first, never mutating any configuration."""
    if len(trace.snapshots) < 2:
        raise ValueError("advise needs a trace with at least 2 rows")
    phase = ActivityPhase()
    recs: list[Recommendation] = []
    prev: Optional[MetricSnapshot] = None
    for idx, snap in enumerate(trace.snapshots):
        window_requests = snap.requests
        if prev is not None and prev.interval_end == snap.interval_start:
            window_requests += prev.requests
        phase, _boundary = update_phase(phase, window_requests, snap.interval_end)
        if idx > 0:
            current = (snap.pages_per_rpc, snap.rpcs_in_flight)
            decision = stage1_decision(
                snap, phase.active, current, models, params, default_space()
            )
            cfg = decision.config
            recs.append(
                Recommendation(
                    time_us=snap.interval_end,
                    kind=decision.kind,
                    pages=cfg[0],
                    window=cfg[1],
                    top_probability=decision.top_probability,
                    score=decision.score,
                    candidate_count=decision.candidate_count,
                )
            )
        prev = snap
    return recs
