"""Synthetic application request streams.

Workloads follow the [stream_type]_[operation_type]_[access_type]_[size]
naming convention (s/f, rd/wr, sq/rn, 8k/1m/16m). Streams are closed-loop:
one outstanding request each, the next request issuing think_time after the
previous one completes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

STREAM_TYPES = {"s": 1, "f": 5}
OP_TYPES = ("rd", "wr")
ACCESS_TYPES = ("sq", "rn")
SIZES = {"8k": 8192, "1m": 1 << 20, "16m": 16 << 20}

DEFAULT_FILE_SIZE = 1 << 30  # 1 GB working set per stream


class WorkloadParseError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    stream_type: str = "s"  # "s" single stream, "f" five streams
    op_type: str = "rd"  # "rd" | "wr"
    access_type: str = "sq"  # "sq" | "rn"
    request_size: int = SIZES["1m"]
    duration_s: Optional[float] = None  # None: run for the experiment duration
    in_place_fraction: float = 0.0  # probability a write revisits a written offset
    think_time_us: int = 0
    file_size: int = DEFAULT_FILE_SIZE

    def __post_init__(self):
        if self.stream_type not in STREAM_TYPES:
            raise WorkloadParseError(f"unknown stream_type token {self.stream_type!r}")
        if self.op_type not in OP_TYPES:
            raise WorkloadParseError(f"unknown op_type token {self.op_type!r}")
        if self.access_type not in ACCESS_TYPES:
            raise WorkloadParseError(f"unknown access_type token {self.access_type!r}")
        if self.request_size not in SIZES.values():
            raise WorkloadParseError(f"request_size {self.request_size} not one of {SIZES}")
        if self.op_type == "rd" and self.in_place_fraction != 0.0:
            raise WorkloadParseError("in_place_fraction must be 0 for reads")
        if not 0.0 <= self.in_place_fraction <= 1.0:
            raise WorkloadParseError("in_place_fraction must be in [0, 1]")
        if self.file_size < self.request_size:
            raise WorkloadParseError("file_size smaller than request_size")

    @property
    def stream_count(self) -> int:
        return STREAM_TYPES[self.stream_type]

    @property
    def is_read(self) -> bool:
        return self.op_type == "rd"


def parse_workload_name(name: str, **overrides) -> WorkloadSpec:
    """Parse a workload name like "s_rd_sq_8k" into a WorkloadSpec."""
    tokens = name.strip().split("_")
    if len(tokens) != 4:
        raise WorkloadParseError(f"expected 4 underscore-separated tokens, got {name!r}")
    st, op, ac, sz = tokens
    if st not in STREAM_TYPES:
        raise WorkloadParseError(f"unknown stream_type token {st!r} in {name!r}")
    if op not in OP_TYPES:
        raise WorkloadParseError(f"unknown op_type token {op!r} in {name!r}")
    if ac not in ACCESS_TYPES:
        raise WorkloadParseError(f"unknown access_type token {ac!r} in {name!r}")
    if sz not in SIZES:
        raise WorkloadParseError(f"unknown size token {sz!r} in {name!r}")
    return WorkloadSpec(
        stream_type=st, op_type=op, access_type=ac, request_size=SIZES[sz], **overrides
    )


def format_workload_name(spec: WorkloadSpec) -> str:
    size_token = {v: k for k, v in SIZES.items()}[spec.request_size]
    return f"{spec.stream_type}_{spec.op_type}_{spec.access_type}_{size_token}"


@dataclass(frozen=True)
class PhaseSequence:
    phases: tuple[tuple[WorkloadSpec, float], ...]  # (spec, duration seconds)
    gap_s: float = 0.0  # idle gap between phases

    def __post_init__(self):
        if not self.phases:
            raise ValueError("phase sequence must be non-empty")
        for _, dur in self.phases:
            if dur <= 0:
                raise ValueError("phase durations must be positive")


class Stream:
    """One closed-loop request stream: a per-stream cursor plus revisit memory."""

    def __init__(self, spec: WorkloadSpec, stream_id: int, rng: np.random.Generator):
        self.spec = spec
        self.stream_id = stream_id
        self.rng = rng
        self.file_id = stream_id
        self._slots = spec.file_size // spec.request_size
        self._cursor = 0
        self._written: list[int] = []
        self._written_set: set[int] = set()

    def next_request(self) -> tuple[int, int, bool, bool]:
        """Returns (offset, length, is_read, in_place_hint)."""
        spec = self.spec
        in_place = False
        if not spec.is_read and spec.in_place_fraction > 0 and self._written:
            if self.rng.random() < spec.in_place_fraction:
                slot = self._written[int(self.rng.integers(0, len(self._written)))]
                return slot * spec.request_size, spec.request_size, False, True
        if spec.access_type == "sq":
            slot = self._cursor
            self._cursor = (self._cursor + 1) % self._slots
        else:
            slot = int(self.rng.integers(0, self._slots))
        if not spec.is_read and slot not in self._written_set:
            self._written_set.add(slot)
            self._written.append(slot)
        return slot * spec.request_size, spec.request_size, spec.is_read, in_place


def make_streams(
    spec: WorkloadSpec, rng_factory, first_file_id: int = 0
) -> list[Stream]:
    """Instantiate the spec's streams, one RNG sub-stream and file each."""
    return [
        Stream(spec, first_file_id + i, rng_factory(first_file_id + i))
        for i in range(spec.stream_count)
    ]


_INTERFERENCE_CATALOG = {
    "all_read": ("s_rd_sq_16m", "s_rd_sq_1m", "s_rd_rn_1m", "s_rd_sq_8k", "s_rd_rn_8k"),
    "all_write": ("s_wr_sq_1m", "s_wr_rn_8k", "s_wr_rn_1m", "s_wr_sq_16m", "s_wr_sq_8k"),
    "mixed": ("s_wr_rn_8k", "s_rd_sq_16m", "s_wr_sq_1m", "s_rd_sq_1m", "s_rd_rn_1m"),
}


def interference_scenario(kind: str, client_count: int, **overrides) -> list[WorkloadSpec]:
    """Distinct per-client workloads sharing one OST set."""
    if client_count < 2:
        raise ValueError("interference needs at least 2 clients")
    if kind not in _INTERFERENCE_CATALOG:
        raise ValueError(f"unknown interference kind {kind!r}")
    names = _INTERFERENCE_CATALOG[kind]
    specs = []
    for i in range(client_count):
        name = names[i % len(names)]
        spec = parse_workload_name(name)
        if not spec.is_read and overrides.get("write_in_place_fraction") is not None:
            spec = replace(spec, in_place_fraction=overrides["write_in_place_fraction"])
        if overrides.get("file_size") is not None:
            spec = replace(spec, file_size=overrides["file_size"])
        specs.append(spec)
    return specs
