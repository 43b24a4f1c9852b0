"""The decision core: candidate filtering, conditional-score-greedy RPC
selection, rule-based cache allocation, and the two-stage per-client
controller.

RPC tuning runs every probe tick during I/O-active phases; cache limits are
re-allocated only when I/O resumes after more than a second of inactivity.
Both actuations stay inside bounded discrete grids, and a below-threshold
candidate set leaves the configuration untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .client import (
    CACHE_MB_CHOICES,
    CACHE_MB_MAX,
    CACHE_MB_MIN,
    PAGES_PER_RPC_CHOICES,
    RPCS_IN_FLIGHT_CHOICES,
    CacheConfig,
    Client,
    RpcConfig,
)
from .learner import build_features
from .metrics import ActivityPhase, MetricSnapshot, SnapshotPair, update_phase

DECISION_NONE = "none"
DECISION_RPC = "rpc"
DECISION_CACHE = "cache"


@dataclass(frozen=True)
class TunerParams:
    tau: float = 0.8
    alpha: float = 0.5
    beta: float = 0.5
    epsilon_improve: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


class ConfigSpace:
    """The bounded discrete grids the tuner may actuate."""

    def __init__(self):
        self.rpc_grid: tuple[tuple[int, int], ...] = tuple(
            (p, w) for p in PAGES_PER_RPC_CHOICES for w in RPCS_IN_FLIGHT_CHOICES
        )
        self.cache_values: tuple[int, ...] = CACHE_MB_CHOICES


_SPACE = ConfigSpace()


def default_space() -> ConfigSpace:
    return _SPACE


def normalize_theta(pages: int, window: int) -> tuple[float, float]:
    """Min-max normalization of config components over the full grid bounds."""
    p_lo, p_hi = PAGES_PER_RPC_CHOICES[0], PAGES_PER_RPC_CHOICES[-1]
    w_lo, w_hi = RPCS_IN_FLIGHT_CHOICES[0], RPCS_IN_FLIGHT_CHOICES[-1]
    return (pages - p_lo) / (p_hi - p_lo), (window - w_lo) / (w_hi - w_lo)


def write_score(prob: float, theta_norm: tuple[float, float], beta: float) -> float:
    return prob * (1.0 + beta * (theta_norm[0] + theta_norm[1]))


def read_score(prob: float, theta_norm: tuple[float, float], alpha: float) -> float:
    return prob * (1.0 + alpha * theta_norm[0]) + theta_norm[1]


def select_model(snapshot: MetricSnapshot) -> str:
    """Pick the direction model by dominant transfer volume (tie goes to read)."""
    return "read" if snapshot.read.volume >= snapshot.write.volume else "write"


def filter_candidates(
    grid: Sequence[tuple[int, int]], probs: np.ndarray, tau: float
) -> list[tuple[tuple[int, int], float]]:
    """Candidates whose predicted improvement probability strictly exceeds tau."""
    return [(cfg, float(p)) for cfg, p in zip(grid, probs) if p > tau]


@dataclass(frozen=True)
class TuneDecision:
    kind: str  # "rpc" | "cache" | "none"
    config: object  # chosen (pages, window) tuple or cache MB
    old: object
    candidate_count: int = 0
    top_probability: float = 0.0
    score: float = 0.0


def select_rpc_config(
    space: ConfigSpace,
    snapshot: MetricSnapshot,
    model,
    params: TunerParams,
    current: tuple[int, int],
    direction: Optional[str] = None,
) -> TuneDecision:
    """Filter the grid by predicted probability, then argmax the direction score.

    An empty candidate set retains the current configuration. Score ties
    break toward the fewest changed parameters, then the larger window,
    then the larger RPC size.
    """
    if direction is None:
        direction = select_model(snapshot)
    features = build_features(snapshot, direction, current, space.rpc_grid)
    probs = np.asarray(model.predict_proba(features), dtype=np.float64)
    candidates = filter_candidates(space.rpc_grid, probs, params.tau)
    if not candidates:
        return TuneDecision(
            kind=DECISION_NONE,
            config=current,
            old=current,
            candidate_count=0,
            top_probability=float(probs.max()) if len(probs) else 0.0,
            score=0.0,
        )
    best_key = None
    best_cfg = None
    best_score = 0.0
    for cfg, prob in candidates:
        theta = normalize_theta(*cfg)
        if direction == "write":
            s = write_score(prob, theta, params.beta)
        else:
            s = read_score(prob, theta, params.alpha)
        unchanged = (cfg[0] == current[0]) + (cfg[1] == current[1])
        key = (s, unchanged, cfg[1], cfg[0])
        if best_key is None or key > best_key:
            best_key = key
            best_cfg = cfg
            best_score = s
    return TuneDecision(
        kind=DECISION_RPC,
        config=best_cfg,
        old=current,
        candidate_count=len(candidates),
        top_probability=max(p for _, p in candidates),
        score=best_score,
    )


# -- cache allocation ------------------------------------------------------


@dataclass(frozen=True)
class ClientCacheStats:
    """Per-client observations over the most recent I/O-active stage."""

    write_volume_mb: float = 0.0
    max_cache_usage_mb: float = 0.0
    max_inflight_rpc_mb: float = 0.0
    active: bool = False

    def __post_init__(self):
        if min(self.write_volume_mb, self.max_cache_usage_mb, self.max_inflight_rpc_mb) < 0:
            raise ValueError("cache stats must be non-negative")


def bucket_up(x: float) -> int:
    """Smallest discrete cache value >= x, clamped to the top bucket."""
    for b in CACHE_MB_CHOICES:
        if b >= x:
            return b
    return CACHE_MB_MAX


def allocate_cache(d_max_mb: float, stats: dict[object, ClientCacheStats]) -> dict[object, int]:
    """Split the node's dirty-cache budget across its I/O clients.

    Inactive clients drop to the smallest bucket. If the per-active-client
    budget covers the largest bucket, every active client gets it; otherwise
    each active client receives the max of its bucketed peak cache usage,
    peak in-flight volume, and write-share slice of the budget.
    """
    if d_max_mb <= 0:
        raise ValueError("d_max_mb must be positive")
    alloc: dict[object, int] = {}
    active = [o for o, s in stats.items() if s.active]
    for o, s in stats.items():
        if not s.active:
            alloc[o] = CACHE_MB_MIN
    if not active:
        return alloc
    budget = d_max_mb / len(active)
    v_tot = sum(stats[o].write_volume_mb for o in active)
    if budget >= CACHE_MB_MAX:
        for o in active:
            alloc[o] = CACHE_MB_MAX
        return alloc
    for o in active:
        s = stats[o]
        share = d_max_mb * s.write_volume_mb / v_tot if v_tot > 0 else 0.0
        alloc[o] = max(
            bucket_up(s.max_cache_usage_mb),
            bucket_up(s.max_inflight_rpc_mb),
            bucket_up(share),
        )
    return alloc


# -- two-stage controller ----------------------------------------------------


def stage1_decision(
    snapshot: MetricSnapshot,
    active: bool,
    current: tuple[int, int],
    models: dict,
    params: TunerParams,
    space: Optional[ConfigSpace] = None,
) -> TuneDecision:
    """The per-tick RPC decision, shared verbatim by the live controller and
    the offline replay path.

    No-ops while inactive, and when the dominant direction carries no valid
    volume signal (nothing for the model to condition on).
    """
    if not active:
        return TuneDecision(kind=DECISION_NONE, config=current, old=current)
    direction = select_model(snapshot)
    dm = snapshot.read if direction == "read" else snapshot.write
    if dm.volume <= 0 or not dm.valid:
        return TuneDecision(kind=DECISION_NONE, config=current, old=current)
    return select_rpc_config(
        space or default_space(), snapshot, models[direction], params, current, direction
    )


@dataclass
class DecisionRecord:
    time_us: int
    client_id: int
    kind: str
    old_pages: int
    old_window: int
    new_pages: int
    new_window: int
    old_cache_mb: int
    new_cache_mb: int
    top_probability: float
    score: float
    candidate_count: int


class ClientController:
    """Stage-1 state for one client: two snapshots, a phase machine, and
    the actuation wiring."""

    def __init__(self, client: Client, models: dict, params: TunerParams,
                 space: Optional[ConfigSpace] = None):
        self.client = client
        self.models = models
        self.params = params
        self.space = space or default_space()
        self.pair = SnapshotPair()
        self.phase = ActivityPhase()

    def observe(self, snapshot: MetricSnapshot, now: int) -> bool:
        """Push the snapshot, advance the phase; returns the boundary flag."""
        prev_requests = 0
        if self.pair.current is not None and (
            self.pair.current.interval_end == snapshot.interval_start
        ):
            prev_requests = self.pair.current.requests
        self.pair.push(snapshot)
        self.phase, boundary = update_phase(
            self.phase, snapshot.requests + prev_requests, now
        )
        return boundary

    def rpc_tick(self, now: int) -> TuneDecision:
        current = (self.client.rpc_config.pages_per_rpc, self.client.rpc_config.rpcs_in_flight)
        decision = stage1_decision(
            self.pair.current, self.phase.active, current, self.models, self.params, self.space
        )
        if decision.kind == DECISION_RPC and decision.config != current:
            self.client.apply_rpc_config(RpcConfig(*decision.config), now)
        return decision


class NodeController:
    """Coordinates one node's client controllers and its cache budget."""

    def __init__(
        self,
        controllers: list[ClientController],
        d_max_mb: float = 4096.0,
        on_rpc_config: Optional[Callable[[RpcConfig], None]] = None,
    ):
        self.controllers = controllers
        self.d_max_mb = d_max_mb
        self.on_rpc_config = on_rpc_config
        self.decisions: list[DecisionRecord] = []

    def _record(self, ctl: ClientController, decision: TuneDecision, now: int,
                old_cache: int, new_cache: int) -> None:
        if decision.kind == DECISION_CACHE:
            cfg = (ctl.client.rpc_config.pages_per_rpc, ctl.client.rpc_config.rpcs_in_flight)
            old = new = cfg
        else:
            old = decision.old
            new = decision.config if decision.kind == DECISION_RPC else decision.old
        self.decisions.append(
            DecisionRecord(
                time_us=now,
                client_id=ctl.client.client_id,
                kind=decision.kind,
                old_pages=old[0],
                old_window=old[1],
                new_pages=new[0],
                new_window=new[1],
                old_cache_mb=old_cache,
                new_cache_mb=new_cache,
                top_probability=decision.top_probability,
                score=decision.score,
                candidate_count=decision.candidate_count,
            )
        )

    def tick(self, snapshots: dict[int, MetricSnapshot], now: int) -> None:
        """One probe tick: stage-1 per client, stage-2 at resume boundaries."""
        boundary = False
        for ctl in self.controllers:
            snap = snapshots[ctl.client.client_id]
            boundary |= ctl.observe(snap, now)
        for ctl in self.controllers:
            decision = ctl.rpc_tick(now)
            cache_mb = ctl.client.cache_config.max_dirty_mb
            self._record(ctl, decision, now, cache_mb, cache_mb)
            if decision.kind == DECISION_RPC and self.on_rpc_config is not None:
                self.on_rpc_config(ctl.client.rpc_config)
        if boundary:
            self._cache_tick(now)

    def _cache_tick(self, now: int) -> None:
        stats = {}
        for ctl in self.controllers:
            c = ctl.client.counters
            stats[ctl.client.client_id] = ClientCacheStats(
                write_volume_mb=c.stage_write_rpc_bytes / (1024 * 1024),
                max_cache_usage_mb=c.stage_max_dirty_bytes / (1024 * 1024),
                max_inflight_rpc_mb=c.stage_max_inflight_write_bytes / (1024 * 1024),
                active=ctl.phase.active,
            )
        alloc = allocate_cache(self.d_max_mb, stats)
        for ctl in self.controllers:
            new_mb = alloc[ctl.client.client_id]
            old_mb = ctl.client.cache_config.max_dirty_mb
            ctl.client.apply_cache_config(CacheConfig(new_mb), now)
            decision = TuneDecision(kind=DECISION_CACHE, config=new_mb, old=old_mb)
            self._record(ctl, decision, now, old_mb, new_mb)
            ctl.client.counters.reset_stage(ctl.client.dirty_bytes)
