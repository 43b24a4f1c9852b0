"""CSV emission for run reports, sweeps, and recommendations.

Every writer is deterministic for a fixed (seed, config): rows are emitted
in construction order and floats are serialized with repr so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .replay import CaratTrace, Recommendation, write_carat_trace
from .simulation import RunReport
from .tuner import DecisionRecord

REPORT_COLUMNS = (
    "t_start_us",
    "t_end_us",
    "node",
    "client",
    "ost",
    "read_app_bytes",
    "write_app_bytes",
    "read_rpc_bytes",
    "write_rpc_bytes",
    "requests",
    "dirty_bytes",
)

DECISION_COLUMNS = (
    "time_us",
    "client",
    "kind",
    "old_pages",
    "old_window",
    "new_pages",
    "new_window",
    "old_cache_mb",
    "new_cache_mb",
    "top_probability",
    "score",
    "candidate_count",
)

SUMMARY_COLUMNS = ("key", "value")

SWEEP_COLUMNS = (
    "pages_per_rpc",
    "rpcs_in_flight",
    "cache_mb",
    "repeats",
    "mean_steady_bps",
    "std_steady_bps",
    "optimal",
)

RECOMMENDATION_COLUMNS = (
    "time_us",
    "client",
    "kind",
    "pages_per_rpc",
    "rpcs_in_flight",
    "top_probability",
    "score",
    "candidate_count",
)

EVAL_COLUMNS = (
    "scenario",
    "case",
    "default_bps",
    "carat_bps",
    "optimal_bps",
    "carat_norm",
    "optimal_norm",
)


def write_report_csvs(report: RunReport, out_dir) -> dict[str, Path]:
    """Write report.csv, decisions.csv, summary.csv, and per-client traces."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    report_path = out / "report.csv"
    with open(report_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in report.intervals:
            w.writerow(
                [
                    r.t_start,
                    r.t_end,
                    r.node,
                    r.client,
                    r.ost,
                    r.read_app_bytes,
                    r.write_app_bytes,
                    r.read_rpc_bytes,
                    r.write_rpc_bytes,
                    r.requests,
                    r.dirty_bytes,
                ]
            )
    paths["report"] = report_path

    decisions_path = out / "decisions.csv"
    with open(decisions_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DECISION_COLUMNS)
        for d in report.decisions:
            w.writerow(
                [
                    d.time_us,
                    d.client_id,
                    d.kind,
                    d.old_pages,
                    d.old_window,
                    d.new_pages,
                    d.new_window,
                    d.old_cache_mb,
                    d.new_cache_mb,
                    repr(d.top_probability),
                    repr(d.score),
                    d.candidate_count,
                ]
            )
    paths["decisions"] = decisions_path

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for k, v in report.summary().items():
            w.writerow([k, v])
    paths["summary"] = summary_path

    for cid, snaps in sorted(report.traces.items()):
        trace = CaratTrace(
            client_id=cid,
            probe_interval_us=report.config.probe_interval_us,
            snapshots=tuple(snaps),
        )
        p = out / f"trace_client_{cid}.trace"
        write_carat_trace(p, trace)
        paths[f"trace_{cid}"] = p
    return paths


def write_sweep_csv(path, rows: Iterable[dict]) -> None:
    """rows: dicts with the SWEEP_COLUMNS keys; exactly one row flagged optimal."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    r["pages_per_rpc"],
                    r["rpcs_in_flight"],
                    r["cache_mb"],
                    r["repeats"],
                    repr(r["mean_steady_bps"]),
                    repr(r["std_steady_bps"]),
                    int(r["optimal"]),
                ]
            )


def write_recommendations_csv(path, client_id: int, recs: Iterable[Recommendation]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECOMMENDATION_COLUMNS)
        for r in recs:
            w.writerow(
                [
                    r.time_us,
                    client_id,
                    r.kind,
                    r.pages,
                    r.window,
                    repr(r.top_probability),
                    repr(r.score),
                    r.candidate_count,
                ]
            )


def write_eval_csv(path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    r["scenario"],
                    r["case"],
                    repr(r["default_bps"]),
                    repr(r["carat_bps"]),
                    repr(r["optimal_bps"]),
                    repr(r["carat_norm"]),
                    repr(r["optimal_norm"]),
                ]
            )
