"""Object storage targets as FIFO service queues.

Each OST serves one RPC at a time at cost c_fixed + c_page * pages, with a
symmetric one-way network delay d_net on both legs. Contention, queue
buildup, and per-page latency inflation all emerge from this single-channel
model; for fixed total bytes the total service time strictly decreases as
pages per RPC grows (fewer fixed charges), which is the lever the RPC
tuner's score regularization exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ServerParams:
    c_fixed_us: int = 200
    c_page_us: int = 5
    d_net_us: int = 50


@dataclass
class Ost:
    ost_id: int
    params: ServerParams
    busy_until: int = 0
    served_rpcs: int = 0
    served_pages: int = 0
    served_bytes: int = 0
    busy_time_us: int = 0
    served_read_bytes: int = 0
    served_write_bytes: int = 0

    def service_time(self, pages: int) -> int:
        return self.params.c_fixed_us + self.params.c_page_us * pages

    def enqueue_rpc(self, pages: int, payload_bytes: int, arrive_at: int, is_read: bool) -> int:
        """Admit one RPC to the FIFO queue; returns the client-side completion time.

        Service starts at max(arrive_at, busy_until); the completion event seen
        by the client lands one network delay after service finishes.
        """
        start = arrive_at if arrive_at > self.busy_until else self.busy_until
        svc = self.service_time(pages)
        completion = start + svc
        self.busy_until = completion
        self.served_rpcs += 1
        self.served_pages += pages
        self.served_bytes += payload_bytes
        self.busy_time_us += svc
        if is_read:
            self.served_read_bytes += payload_bytes
        else:
            self.served_write_bytes += payload_bytes
        return completion + self.params.d_net_us


def stripe_target(file_id: int, extent_index: int, ost_count: int) -> int:
    """Round-robin extent placement across OSTs, offset per file."""
    if ost_count < 1:
        raise ValueError(f"ost_count must be >= 1, got {ost_count}")
    return (file_id + extent_index) % ost_count
