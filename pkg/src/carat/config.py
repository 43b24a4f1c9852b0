"""Experiment configuration: programmatic construction plus TOML loading.

A config fully determines a run: seed, duration, cluster layout, server
parameters, workload (single spec, per-node specs, or a phase sequence),
and the execution mode (default / static / carat / sweep / collect).
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .client import CACHE_MB_CHOICES, CacheConfig, RpcConfig
from .server import ServerParams
from .tuner import TunerParams
from .workload import PhaseSequence, WorkloadSpec, parse_workload_name

MODES = ("default", "static", "carat", "sweep", "collect")

DEFAULT_RPC_CONFIG = RpcConfig(1024, 8)
DEFAULT_CACHE_MB = 256


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    duration_s: float = 10.0
    probe_interval_s: float = 0.5
    node_count: int = 1
    ost_count: int = 1
    server: ServerParams = field(default_factory=ServerParams)
    # Exactly one of workload / node_workloads / phases drives the run.
    workload: Optional[WorkloadSpec] = None
    # One entry per node; each entry is the tuple of specs that node runs.
    node_workloads: Optional[tuple[tuple[WorkloadSpec, ...], ...]] = None
    phases: Optional[PhaseSequence] = None
    start_delay_s: float = 0.0
    mode: str = "default"
    pages_per_rpc: int = DEFAULT_RPC_CONFIG.pages_per_rpc
    rpcs_in_flight: int = DEFAULT_RPC_CONFIG.rpcs_in_flight
    cache_mb: int = DEFAULT_CACHE_MB
    read_model_path: Optional[str] = None
    write_model_path: Optional[str] = None
    tuner: TunerParams = field(default_factory=TunerParams)
    d_max_mb: float = 4096.0
    t_wait_us: int = 1_000_000
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration must be positive")
        if self.probe_interval_s <= 0:
            raise ConfigError("probe interval must be positive")
        if self.node_count < 1 or self.ost_count < 1:
            raise ConfigError("node_count and ost_count must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode {self.mode!r} not one of {MODES}")
        sources = sum(x is not None for x in (self.workload, self.node_workloads, self.phases))
        if sources != 1:
            raise ConfigError("exactly one of workload, node_workloads, phases is required")
        if self.node_workloads is not None and len(self.node_workloads) != self.node_count:
            raise ConfigError("node_workloads must list one workload per node")
        RpcConfig(self.pages_per_rpc, self.rpcs_in_flight)  # validates the grid
        if self.cache_mb not in CACHE_MB_CHOICES:
            raise ConfigError(f"cache_mb {self.cache_mb} not in {CACHE_MB_CHOICES}")
        if self.mode == "carat":
            if not self.read_model_path or not self.write_model_path:
                raise ConfigError("carat mode requires read_model and write_model paths")
            for p in (self.read_model_path, self.write_model_path):
                if not Path(p).exists():
                    raise ConfigError(f"model file {p} does not exist")

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_s * 1_000_000))

    @property
    def probe_interval_us(self) -> int:
        return int(round(self.probe_interval_s * 1_000_000))

    @property
    def start_delay_us(self) -> int:
        return int(round(self.start_delay_s * 1_000_000))

    @property
    def initial_rpc_config(self) -> RpcConfig:
        return RpcConfig(self.pages_per_rpc, self.rpcs_in_flight)

    @property
    def initial_cache_config(self) -> CacheConfig:
        return CacheConfig(self.cache_mb)

    def config_hash(self) -> str:
        """Provenance hash over every run-determining field."""
        blob = json.dumps(_as_jsonable(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _as_jsonable(cfg: ExperimentConfig) -> dict:
    def spec_d(s: WorkloadSpec) -> dict:
        return {
            "stream_type": s.stream_type,
            "op_type": s.op_type,
            "access_type": s.access_type,
            "request_size": s.request_size,
            "duration_s": s.duration_s,
            "in_place_fraction": s.in_place_fraction,
            "think_time_us": s.think_time_us,
            "file_size": s.file_size,
        }

    d = {
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
        "probe_interval_s": cfg.probe_interval_s,
        "node_count": cfg.node_count,
        "ost_count": cfg.ost_count,
        "server": [cfg.server.c_fixed_us, cfg.server.c_page_us, cfg.server.d_net_us],
        "mode": cfg.mode,
        "pages_per_rpc": cfg.pages_per_rpc,
        "rpcs_in_flight": cfg.rpcs_in_flight,
        "cache_mb": cfg.cache_mb,
        "tuner": [cfg.tuner.tau, cfg.tuner.alpha, cfg.tuner.beta, cfg.tuner.epsilon_improve],
        "d_max_mb": cfg.d_max_mb,
        "t_wait_us": cfg.t_wait_us,
        "start_delay_s": cfg.start_delay_s,
        "read_model": cfg.read_model_path,
        "write_model": cfg.write_model_path,
    }
    if cfg.workload is not None:
        d["workload"] = spec_d(cfg.workload)
    if cfg.node_workloads is not None:
        d["node_workloads"] = [[spec_d(s) for s in specs] for specs in cfg.node_workloads]
    if cfg.phases is not None:
        d["phases"] = {
            "gap_s": cfg.phases.gap_s,
            "items": [[spec_d(s), dur] for s, dur in cfg.phases.phases],
        }
    return d


def _spec_from_table(tbl: dict) -> WorkloadSpec:
    kwargs = {}
    for key in ("file_size", "think_time_us"):
        if key in tbl:
            kwargs[key] = int(tbl[key])
    if "in_place_fraction" in tbl:
        kwargs["in_place_fraction"] = float(tbl["in_place_fraction"])
    return parse_workload_name(tbl["name"], **kwargs)


def load_config(path, **overrides) -> ExperimentConfig:
    """Load an experiment description from a TOML file; kwargs override."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")

    run = doc.get("run", {})
    cluster = doc.get("cluster", {})
    server_tbl = doc.get("server", {})
    wl = doc.get("workload", {})
    mode_tbl = doc.get("mode", {})
    out = doc.get("output", {})

    kwargs: dict = {
        "seed": int(run.get("seed", 0)),
        "duration_s": float(run.get("duration_s", 10.0)),
        "probe_interval_s": float(run.get("probe_interval_s", 0.5)),
        "start_delay_s": float(run.get("start_delay_s", 0.0)),
        "node_count": int(cluster.get("node_count", 1)),
        "ost_count": int(cluster.get("ost_count", 1)),
        "server": ServerParams(
            c_fixed_us=int(server_tbl.get("c_fixed_us", 200)),
            c_page_us=int(server_tbl.get("c_page_us", 5)),
            d_net_us=int(server_tbl.get("d_net_us", 50)),
        ),
        "mode": mode_tbl.get("kind", "default"),
        "pages_per_rpc": int(mode_tbl.get("pages_per_rpc", 1024)),
        "rpcs_in_flight": int(mode_tbl.get("rpcs_in_flight", 8)),
        "cache_mb": int(mode_tbl.get("cache_mb", DEFAULT_CACHE_MB)),
        "read_model_path": mode_tbl.get("read_model"),
        "write_model_path": mode_tbl.get("write_model"),
        "d_max_mb": float(mode_tbl.get("d_max_mb", 4096.0)),
        "tuner": TunerParams(
            tau=float(mode_tbl.get("tau", 0.8)),
            alpha=float(mode_tbl.get("alpha", 0.5)),
            beta=float(mode_tbl.get("beta", 0.5)),
        ),
        "out_dir": out.get("out_dir"),
    }

    if "phases" in wl:
        phases = tuple(
            (_spec_from_table(p), float(p["duration_s"])) for p in wl["phases"]
        )
        kwargs["phases"] = PhaseSequence(phases, gap_s=float(wl.get("gap_s", 0.0)))
    elif "per_node" in wl:
        kwargs["node_workloads"] = tuple((_spec_from_table(p),) for p in wl["per_node"])
    elif "name" in wl:
        kwargs["workload"] = _spec_from_table(wl)
    kwargs.update(overrides)
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc))
