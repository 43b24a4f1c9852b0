"""The simulation harness: builds a cluster from an ExperimentConfig, drives
workload streams through the client/server models, probes metrics on the
controller cadence, and produces a RunReport.

Modes: "default"/"static" pin one configuration; "carat" runs the two-stage
controller per client; "collect" applies a uniformly random RPC config each
probe and emits labeled training samples; "sweep" is orchestrated above
this layer, one static run per grid point.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .client import CacheConfig, Client, RpcConfig
from .config import ExperimentConfig
from .gbdt import GbdtClassifier, load_model
from .learner import TrainingSample, build_features, label, snapshot_features, theta_log_features
from .metrics import PAGE_SIZE, MetricSnapshot, take_snapshot
from .server import Ost, stripe_target
from .simcore import Event, EventKind, EventQueue, substream
from .tuner import ClientController, NodeController, DecisionRecord, default_space, select_model
from .workload import Stream, WorkloadSpec

_SAME_T_GUARD = 200_000  # consecutive zero-elapsed requests before aborting


@dataclass(eq=False)
class _RequestToken:
    ctx: "_StreamCtx"
    parts: int


class _StreamCtx:
    __slots__ = ("stream", "node", "spec", "end_us", "active", "last_t", "same_t")

    def __init__(self, stream: Stream, node: "_Node", spec: WorkloadSpec, end_us: int):
        self.stream = stream
        self.node = node
        self.spec = spec
        self.end_us = end_us
        self.active = True
        self.last_t = -1
        self.same_t = 0


class _Node:
    def __init__(self, node_id: int):
        self.node_id = node_id
        self.clients: dict[int, Client] = {}  # keyed by ost_id
        self.routing_config: RpcConfig = RpcConfig()
        self.controller: Optional[NodeController] = None


@dataclass
class IntervalRow:
    t_start: int
    t_end: int
    node: int
    client: int
    ost: int
    read_app_bytes: int
    write_app_bytes: int
    read_rpc_bytes: int
    write_rpc_bytes: int
    requests: int
    dirty_bytes: int


@dataclass
class RunReport:
    config: ExperimentConfig
    end_us: int
    intervals: list[IntervalRow]
    decisions: list[DecisionRecord]
    traces: dict[int, list[MetricSnapshot]]
    final_configs: dict[int, tuple[int, int, int]]
    samples: list[TrainingSample]
    served_bytes_by_ost: dict[int, int]
    wall_s: float = 0.0

    def app_bytes(self, t_lo: int, t_hi: int, direction: Optional[str] = None) -> int:
        total = 0
        for row in self.intervals:
            if row.t_end <= t_lo or row.t_start >= t_hi:
                continue
            if direction in (None, "read"):
                total += row.read_app_bytes
            if direction in (None, "write"):
                total += row.write_app_bytes
        return total

    def steady_throughput(self, direction: Optional[str] = None,
                          window: Optional[tuple[int, int]] = None) -> float:
        """Mean application throughput (bytes/s) over the last two-thirds of the
        run, or over an explicit [lo, hi) microsecond window."""
        if window is None:
            window = (self.end_us // 3, self.end_us)
        lo, hi = window
        if hi <= lo:
            return 0.0
        return self.app_bytes(lo, hi, direction) * 1_000_000 / (hi - lo)

    def aggregate_throughput(self, direction: Optional[str] = None) -> float:
        return self.app_bytes(0, self.end_us, direction) * 1_000_000 / self.end_us

    def summary(self) -> dict:
        items = {
            "seed": self.config.seed,
            "config_hash": self.config.config_hash(),
            "mode": self.config.mode,
            "end_us": self.end_us,
            "aggregate_throughput_bps": repr(self.aggregate_throughput()),
            "steady_throughput_bps": repr(self.steady_throughput()),
            "steady_read_bps": repr(self.steady_throughput("read")),
            "steady_write_bps": repr(self.steady_throughput("write")),
        }
        for cid, (p, w, c) in sorted(self.final_configs.items()):
            items[f"client{cid}_final"] = f"{p}/{w}/{c}"
        return items


class Simulation:
    def __init__(self, config: ExperimentConfig, models: Optional[dict] = None):
        self.config = config
        self.engine = EventQueue(self._handle)
        self.osts = [Ost(i, config.server) for i in range(config.ost_count)]
        self.nodes: list[_Node] = []
        self.models = models
        if config.mode == "carat" and self.models is None:
            self.models = {
                "read": load_model(config.read_model_path),
                "write": load_model(config.write_model_path),
            }
        self._build_nodes()
        self._plan = self._phase_plan()
        self.end_us = max(end for _, end, _ in self._plan)
        self._contexts: list[_StreamCtx] = []
        self._prev_snapshot: dict[int, Optional[MetricSnapshot]] = {}
        self._last_dirty: dict[int, int] = {}
        self._interval_start = 0
        self.intervals: list[IntervalRow] = []
        self.traces: dict[int, list[MetricSnapshot]] = {}
        self.samples: list[TrainingSample] = []
        self._collect_rng = {
            n.node_id: substream(config.seed, 2, n.node_id) for n in self.nodes
        }
        self._pending_sample: dict[int, tuple[dict[int, MetricSnapshot], tuple[int, int], tuple[int, int]]] = {}
        self._space = default_space()
        self._clients_by_id: dict[int, Client] = {}
        for node in self.nodes:
            for c in node.clients.values():
                self._clients_by_id[c.client_id] = c
                self._prev_snapshot[c.client_id] = None
                self._last_dirty[c.client_id] = 0
                self.traces[c.client_id] = []

    # -- construction ----------------------------------------------------

    def _build_nodes(self) -> None:
        cfg = self.config
        cid = 0
        for n in range(cfg.node_count):
            node = _Node(n)
            node.routing_config = cfg.initial_rpc_config
            for ost in self.osts:
                client = Client(
                    client_id=cid,
                    node_id=n,
                    ost=ost,
                    engine=self.engine,
                    rpc_config=cfg.initial_rpc_config,
                    cache_config=cfg.initial_cache_config,
                    t_wait_us=cfg.t_wait_us,
                    on_write_admitted=self._on_write_admitted,
                    on_read_complete=self._on_read_complete,
                )
                node.clients[ost.ost_id] = client
                cid += 1
            if cfg.mode == "carat":
                controllers = [
                    ClientController(c, self.models, cfg.tuner, default_space())
                    for c in node.clients.values()
                ]
                node.controller = NodeController(
                    controllers,
                    d_max_mb=cfg.d_max_mb,
                    on_rpc_config=lambda rc, _node=node: setattr(_node, "routing_config", rc),
                )
            self.nodes.append(node)

    def _phase_plan(self) -> list[tuple[int, int, dict[int, tuple[WorkloadSpec, ...]]]]:
        cfg = self.config
        plan = []
        if cfg.workload is not None:
            spec_map = {n.node_id: (cfg.workload,) for n in self.nodes}
            plan.append((cfg.start_delay_us, cfg.duration_us, spec_map))
        elif cfg.node_workloads is not None:
            spec_map = {i: tuple(specs) for i, specs in enumerate(cfg.node_workloads)}
            plan.append((cfg.start_delay_us, cfg.duration_us, spec_map))
        else:
            t = cfg.start_delay_us
            gap = int(round(cfg.phases.gap_s * 1_000_000))
            for spec, dur_s in cfg.phases.phases:
                dur = int(round(dur_s * 1_000_000))
                plan.append((t, t + dur, {n.node_id: (spec,) for n in self.nodes}))
                t += dur + gap
        return plan

    # -- event plumbing ---------------------------------------------------

    def _handle(self, ev: Event) -> None:
        kind = ev.kind
        if kind == EventKind.REQUEST_ARRIVAL:
            self._issue_request(ev.payload, self.engine.now)
        elif kind == EventKind.RPC_CLIENT_COMPLETE:
            client, rpc = ev.payload
            client.on_rpc_complete(rpc, self.engine.now)
        elif kind == EventKind.EXTENT_TIMEOUT:
            client, key = ev.payload
            client.on_extent_timeout(key, self.engine.now)
        elif kind == EventKind.PROBE_TICK:
            self._on_probe(self.engine.now)
        elif kind == EventKind.PHASE_SWITCH:
            self._start_phase(ev.payload, self.engine.now)

    def _start_phase(self, phase_idx: int, now: int) -> None:
        start, end, spec_map = self._plan[phase_idx]
        for node in self.nodes:
            specs = spec_map.get(node.node_id)
            if not specs:
                continue
            for spec_idx, spec in enumerate(specs):
                for i in range(spec.stream_count):
                    file_id = phase_idx * 1024 + node.node_id * 64 + spec_idx * 8 + i
                    rng = substream(self.config.seed, 1, node.node_id, file_id)
                    ctx = _StreamCtx(Stream(spec, file_id, rng), node, spec, end)
                    self._contexts.append(ctx)
                    self.engine.schedule_at(now, EventKind.REQUEST_ARRIVAL, ctx)

    # -- request routing --------------------------------------------------

    def _route_pages(self, node: _Node, file_id: int, p0: int, p1: int):
        rp = node.routing_config.pages_per_rpc
        ost_count = self.config.ost_count
        runs: list[list] = []
        page = p0
        while page < p1:
            eidx = page // rp
            chunk_end = min(p1, (eidx + 1) * rp)
            client = node.clients[stripe_target(file_id, eidx, ost_count)]
            if runs and runs[-1][0] is client and runs[-1][2] == page:
                runs[-1][2] = chunk_end
            else:
                runs.append([client, page, chunk_end])
            page = chunk_end
        return runs

    def _issue_request(self, ctx: _StreamCtx, now: int) -> None:
        if not ctx.active or now >= ctx.end_us:
            ctx.active = False
            return
        if now == ctx.last_t:
            ctx.same_t += 1
            if ctx.same_t > _SAME_T_GUARD:
                raise RuntimeError(
                    "stream makes no simulated-time progress; give the workload "
                    "a positive think_time_us (writes are absorbed at memory speed)"
                )
        else:
            ctx.last_t = now
            ctx.same_t = 0
        offset, length, is_read, in_place_hint = ctx.stream.next_request()
        p0 = offset // PAGE_SIZE
        p1 = (offset + length - 1) // PAGE_SIZE + 1
        runs = self._route_pages(ctx.node, ctx.stream.file_id, p0, p1)
        for client, _, _ in runs:
            client.note_request()
        token = _RequestToken(ctx, 0)
        if is_read:
            rpc_count = 0
            for client, start, end in runs:
                rpcs = client.admit_read(
                    ctx.stream.file_id, start * PAGE_SIZE,
                    (end - start) * PAGE_SIZE, now, token=token
                )
                rpc_count += len(rpcs)
            token.parts = rpc_count
            if rpc_count == 0:
                self._request_done(token, now)
        else:
            token.parts = len(runs)
            for client, start, end in runs:
                done = client.admit_write_pages(
                    ctx.stream.file_id, start, end, now,
                    in_place_hint=in_place_hint, token=token,
                )
                if done:
                    token.parts -= 1
            if token.parts == 0:
                self._request_done(token, now)

    def _request_done(self, token: _RequestToken, now: int) -> None:
        ctx = token.ctx
        if not ctx.active:
            return
        self.engine.schedule_at(
            now + ctx.spec.think_time_us, EventKind.REQUEST_ARRIVAL, ctx
        )

    def _on_write_admitted(self, token, now: int) -> None:
        if token is None:
            return
        token.parts -= 1
        if token.parts == 0:
            self._request_done(token, now)

    def _on_read_complete(self, token, payload_bytes: int, now: int) -> None:
        if token is None:
            return
        token.parts -= 1
        if token.parts == 0:
            self._request_done(token, now)

    # -- probe loop --------------------------------------------------------

    def _snapshot_client(self, client: Client, now: int) -> MetricSnapshot:
        client.flush_inflight_integral(now)
        dirty_delta = client.dirty_bytes - self._last_dirty[client.client_id]
        snap = take_snapshot(
            client.counters,
            self._interval_start,
            now,
            dirty_delta,
            client.rpc_config.pages_per_rpc,
            client.rpc_config.rpcs_in_flight,
            client.cache_config.max_dirty_mb,
            previous=self._prev_snapshot[client.client_id],
        )
        return snap

    def _on_probe(self, now: int) -> None:
        snaps: dict[int, MetricSnapshot] = {}
        for node in self.nodes:
            for client in node.clients.values():
                snap = self._snapshot_client(client, now)
                snaps[client.client_id] = snap
                self.traces[client.client_id].append(snap)
                self.intervals.append(
                    IntervalRow(
                        t_start=self._interval_start,
                        t_end=now,
                        node=node.node_id,
                        client=client.client_id,
                        ost=client.ost.ost_id,
                        read_app_bytes=client.counters.read_returned_bytes,
                        write_app_bytes=client.counters.admitted_write_bytes,
                        read_rpc_bytes=client.counters.read.bytes_completed,
                        write_rpc_bytes=client.counters.write.bytes_completed,
                        requests=client.counters.requests,
                        dirty_bytes=client.dirty_bytes,
                    )
                )
        mode = self.config.mode
        if mode == "carat":
            for node in self.nodes:
                node.controller.tick(snaps, now)
        elif mode == "collect":
            self._collect_tick(snaps, now)
        for node in self.nodes:
            for client in node.clients.values():
                self._prev_snapshot[client.client_id] = snaps[client.client_id]
                self._last_dirty[client.client_id] = client.dirty_bytes
                client.counters.reset_interval(client.dirty_bytes)
        self._interval_start = now
        if not self._finished(now):
            self.engine.schedule_at(
                now + self.config.probe_interval_us, EventKind.PROBE_TICK, None
            )

    def _collect_tick(self, snaps: dict[int, MetricSnapshot], now: int) -> None:
        for node in self.nodes:
            pending = self._pending_sample.get(node.node_id)
            if pending is not None:
                before, cur_cfg, cand_cfg = pending
                for client in node.clients.values():
                    b = before[client.client_id]
                    a = snaps[client.client_id]
                    direction = select_model(b)
                    bm = b.read if direction == "read" else b.write
                    am = a.read if direction == "read" else a.write
                    if not bm.valid:
                        continue
                    lab = label(bm.volume, am.volume)
                    if lab is None:
                        continue
                    feats = build_features(b, direction, cur_cfg, [cand_cfg])[0]
                    self.samples.append(
                        TrainingSample(
                            direction=direction,
                            features=tuple(float(v) for v in feats),
                            label=lab,
                            perf_before=float(bm.volume),
                            perf_after=float(am.volume),
                        )
                    )
            rng = self._collect_rng[node.node_id]
            grid = self._space.rpc_grid
            cand = grid[int(rng.integers(0, len(grid)))]
            any_client = next(iter(node.clients.values()))
            cur = (any_client.rpc_config.pages_per_rpc, any_client.rpc_config.rpcs_in_flight)
            self._pending_sample[node.node_id] = (snaps, cur, cand)
            new_cfg = RpcConfig(*cand)
            for client in node.clients.values():
                client.apply_rpc_config(new_cfg, now)
            node.routing_config = new_cfg

    def _finished(self, now: int) -> bool:
        if now < self.end_us:
            return False
        if any(ctx.active for ctx in self._contexts):
            return False
        for client in self._clients_by_id.values():
            if (
                client.inflight
                or client.pending
                or client.open_extents
                or client.blocked_writers
            ):
                return False
        return True

    # -- entry point --------------------------------------------------------

    def run(self) -> RunReport:
        t0 = time.perf_counter()
        for idx, (start, _, _) in enumerate(self._plan):
            self.engine.schedule_at(start, EventKind.PHASE_SWITCH, idx)
        self.engine.schedule_at(self.config.probe_interval_us, EventKind.PROBE_TICK, None)
        hard_cap = self.end_us + 60_000_000  # drain allowance past the workload end
        self.engine.run_to_exhaustion(hard_limit=hard_cap)
        decisions: list[DecisionRecord] = []
        for node in self.nodes:
            if node.controller is not None:
                decisions.extend(node.controller.decisions)
        final = {
            c.client_id: (
                c.rpc_config.pages_per_rpc,
                c.rpc_config.rpcs_in_flight,
                c.cache_config.max_dirty_mb,
            )
            for c in self._clients_by_id.values()
        }
        report = RunReport(
            config=self.config,
            end_us=self.end_us,
            intervals=self.intervals,
            decisions=decisions,
            traces=self.traces,
            final_configs=final,
            samples=self.samples,
            served_bytes_by_ost={o.ost_id: o.served_bytes for o in self.osts},
            wall_s=time.perf_counter() - t0,
        )
        return report


def run_experiment(config: ExperimentConfig, models: Optional[dict] = None) -> RunReport:
    return Simulation(config, models=models).run()
