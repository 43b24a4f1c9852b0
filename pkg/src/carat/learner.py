"""Improvement classification: features, labels, and training.

A sample pairs the client's current snapshot (metrics + deltas for one
direction) with the configuration in force and a candidate configuration;
its label says whether the next interval's direction-matched transfer
volume beat the current one by more than epsilon (15%). Separate models are
trained for reads and writes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .client import PAGES_PER_RPC_CHOICES, RPCS_IN_FLIGHT_CHOICES, RpcConfig
from .gbdt import GbdtClassifier, load_model, save_model
from .metrics import MetricSnapshot

IMPROVEMENT_EPSILON = 0.15

WRITE_FEATURE_ORDER = (
    "w_page_util",
    "w_channel_util",
    "w_unit_latency",
    "w_volume",
    "dirty_util",
    "est_cache_update",
    "d_w_page_util",
    "d_w_channel_util",
    "d_w_unit_latency",
    "d_w_volume",
    "d_dirty_util",
    "d_est_cache_update",
    "cur_pages",
    "cur_window",
    "cand_pages",
    "cand_window",
)

READ_FEATURE_ORDER = (
    "r_page_util",
    "r_channel_util",
    "r_unit_latency",
    "r_volume",
    "d_r_page_util",
    "d_r_channel_util",
    "d_r_unit_latency",
    "d_r_volume",
    "cur_pages",
    "cur_window",
    "cand_pages",
    "cand_window",
)

_LOG_P_LO = math.log2(PAGES_PER_RPC_CHOICES[0])
_LOG_P_HI = math.log2(PAGES_PER_RPC_CHOICES[-1])
_LOG_W_LO = math.log2(RPCS_IN_FLIGHT_CHOICES[0])
_LOG_W_HI = math.log2(RPCS_IN_FLIGHT_CHOICES[-1])


def feature_order(direction: str) -> tuple[str, ...]:
    return READ_FEATURE_ORDER if direction == "read" else WRITE_FEATURE_ORDER


def theta_log_features(pages: int, window: int) -> tuple[float, float]:
    """Config components as log2 values min-max scaled to [0,1] over the grid."""
    return (
        (math.log2(pages) - _LOG_P_LO) / (_LOG_P_HI - _LOG_P_LO),
        (math.log2(window) - _LOG_W_LO) / (_LOG_W_HI - _LOG_W_LO),
    )


def snapshot_features(snapshot: MetricSnapshot, direction: str) -> list[float]:
    if direction == "write":
        w = snapshot.write
        return [
            w.page_util,
            w.channel_util,
            w.unit_latency,
            float(w.volume),
            snapshot.dirty_util,
            float(snapshot.est_cache_update),
            snapshot.d_write_page_util,
            snapshot.d_write_channel_util,
            snapshot.d_write_unit_latency,
            float(snapshot.d_write_volume),
            snapshot.d_dirty_util,
            float(snapshot.d_est_cache_update),
        ]
    r = snapshot.read
    return [
        r.page_util,
        r.channel_util,
        r.unit_latency,
        float(r.volume),
        snapshot.d_read_page_util,
        snapshot.d_read_channel_util,
        snapshot.d_read_unit_latency,
        float(snapshot.d_read_volume),
    ]


def build_features(
    snapshot: MetricSnapshot,
    direction: str,
    current: tuple[int, int],
    candidates: Sequence[tuple[int, int]],
) -> np.ndarray:
    """Feature matrix: one row per candidate config, sharing the snapshot context."""
    base = snapshot_features(snapshot, direction)
    cur = theta_log_features(*current)
    rows = np.empty((len(candidates), len(base) + 4), dtype=np.float64)
    rows[:, : len(base)] = base
    rows[:, len(base)] = cur[0]
    rows[:, len(base) + 1] = cur[1]
    for i, (p, w) in enumerate(candidates):
        t = theta_log_features(p, w)
        rows[i, len(base) + 2] = t[0]
        rows[i, len(base) + 3] = t[1]
    return rows


def label(perf_before: float, perf_after: float, epsilon: float = IMPROVEMENT_EPSILON):
    """1 iff the candidate improved performance beyond epsilon; None skips zero baselines."""
    if perf_before < 0 or perf_after < 0:
        raise ValueError("performance values must be non-negative")
    if perf_before == 0:
        return None
    return 1 if perf_after > (1.0 + epsilon) * perf_before else 0


@dataclass(frozen=True)
class TrainingSample:
    direction: str
    features: tuple[float, ...]
    label: int
    perf_before: float
    perf_after: float


def write_samples_csv(path, samples: Iterable[TrainingSample], direction: str) -> int:
    names = feature_order(direction)
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label", "perf_before", "perf_after"])
        for s in samples:
            if s.direction != direction:
                continue
            writer.writerow([repr(v) for v in s.features] + [s.label, repr(s.perf_before), repr(s.perf_after)])
            count += 1
    return count


def read_samples_csv(path, direction: str) -> tuple[np.ndarray, np.ndarray]:
    names = feature_order(direction)
    X: list[list[float]] = []
    y: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[: len(names)] != list(names):
            raise ValueError(f"sample file {path} does not carry the {direction} feature header")
        for row in reader:
            X.append([float(v) for v in row[: len(names)]])
            y.append(int(row[len(names)]))
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


@dataclass(frozen=True)
class TrainReport:
    direction: str
    n_train: int
    n_val: int
    val_error: float
    majority_error: float
    final_train_loss: float


def train(
    X: np.ndarray,
    y: np.ndarray,
    direction: str,
    n_rounds: int = 200,
    max_depth: int = 4,
    learning_rate: float = 0.1,
    seed: int = 0,
    val_fraction: float = 0.2,
) -> tuple[GbdtClassifier, TrainReport]:
    """Fit a direction model on an 80:20 train/validation split."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) < 2:
        raise ValueError("need at least 2 samples")
    if not (np.any(y == 0) and np.any(y == 1)):
        raise ValueError("training data must contain both labels")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(X))
    n_val = max(1, int(round(len(X) * val_fraction)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if not (np.any(y[train_idx] == 0) and np.any(y[train_idx] == 1)):
        raise ValueError("training split ended up single-class; need more data")
    model = GbdtClassifier(
        n_rounds=n_rounds, max_depth=max_depth, learning_rate=learning_rate
    )
    model.fit(X[train_idx], y[train_idx])
    model.direction = direction
    canonical = feature_order(direction)
    if X.shape[1] == len(canonical):
        model.feature_order = list(canonical)
    else:
        model.feature_order = [f"f{i}" for i in range(X.shape[1])]
    pred = (model.predict_proba(X[val_idx]) > 0.5).astype(np.float64)
    val_error = float(np.mean(pred != y[val_idx]))
    pos_rate = float(np.mean(y[val_idx]))
    majority_error = min(pos_rate, 1.0 - pos_rate)
    return model, TrainReport(
        direction=direction,
        n_train=len(train_idx),
        n_val=len(val_idx),
        val_error=val_error,
        majority_error=majority_error,
        final_train_loss=model.train_losses_[-1] if model.train_losses_ else float("nan"),
    )


__all__ = [
    "IMPROVEMENT_EPSILON",
    "READ_FEATURE_ORDER",
    "WRITE_FEATURE_ORDER",
    "TrainingSample",
    "TrainReport",
    "build_features",
    "feature_order",
    "label",
    "load_model",
    "read_samples_csv",
    "save_model",
    "snapshot_features",
    "theta_log_features",
    "train",
    "write_samples_csv",
]
