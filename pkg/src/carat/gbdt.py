"""Gradient-boosted decision trees for binary classification, from scratch.

An additive ensemble of axis-aligned regression trees fit to logistic-loss
pseudo-residuals with exact greedy split search (pre-sorted columns) and
one Newton step per leaf. Inference is deterministic; models round-trip
through a versioned JSON document bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MODEL_FORMAT = "carat-gbdt"
MODEL_FORMAT_VERSION = 1

_LEAF_CLIP = 10.0


class ModelFormatError(ValueError):
    """Corrupt, truncated, or version-incompatible model file."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass
class _Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            f = feat[rows]
            go_left = X[rows, f] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return self.value[node]

    def to_lists(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_lists(cls, d: dict) -> "_Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.intp),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.intp),
            right=np.asarray(d["right"], dtype=np.intp),
            value=np.asarray(d["value"], dtype=np.float64),
        )


class GbdtClassifier:
    """Binary classifier with a logistic output head.

    Parameters mirror the usual boosting knobs; defaults suit desk-scale
    sample counts. The estimator follows the familiar fit/predict_proba/
    get_params surface; predict_proba returns the positive-class
    probability as a 1-D array.
    """

    def __init__(
        self,
        n_rounds: int = 200,
        max_depth: int = 4,
        learning_rate: float = 0.1,
        min_samples_leaf: int = 5,
        reg_lambda: float = 1.0,
    ):
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf
        self.reg_lambda = reg_lambda
        self.direction: Optional[str] = None
        self.feature_order: Optional[list[str]] = None
        self.trees_: list[_Tree] = []
        self.base_score_: float = 0.0
        self.train_losses_: list[float] = []

    # sklearn-style parameter plumbing
    def get_params(self, deep: bool = True) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_samples_leaf": self.min_samples_leaf,
            "reg_lambda": self.reg_lambda,
        }

    def set_params(self, **params) -> "GbdtClassifier":
        for k, v in params.items():
            if k not in self.get_params():
                raise ValueError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    @property
    def is_fitted(self) -> bool:
        return bool(self.trees_) or self.train_losses_ != [] or self.base_score_ != 0.0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GbdtClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-D with one label per row")
        if len(X) < 2:
            raise ValueError("need at least 2 samples")
        if not (np.any(y == 0) and np.any(y == 1)):
            raise ValueError("training data must contain both classes")
        n = len(y)
        prior = float(np.clip(y.mean(), 1e-6, 1.0 - 1e-6))
        self.base_score_ = float(np.log(prior / (1.0 - prior)))
        order = np.argsort(X, axis=0, kind="stable")
        raw = np.full(n, self.base_score_)
        self.trees_ = []
        self.train_losses_ = []
        for _ in range(self.n_rounds):
            p = _sigmoid(raw)
            g = y - p
            h = p * (1.0 - p)
            tree, leaf_of = self._grow(X, order, g, h)
            self.trees_.append(tree)
            raw = raw + self.learning_rate * tree.value[leaf_of]
            self.train_losses_.append(_log_loss(y, _sigmoid(raw)))
        return self

    def _grow(
        self, X: np.ndarray, order: np.ndarray, g: np.ndarray, h: np.ndarray
    ) -> tuple[_Tree, np.ndarray]:
        n, d = X.shape
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []
        leaf_of = np.zeros(n, dtype=np.intp)

        def new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            return len(feature) - 1

        root = new_node()
        mask = np.ones(n, dtype=bool)
        stack = [(root, mask, 0)]
        min_leaf = self.min_samples_leaf
        while stack:
            node, m, depth = stack.pop()
            idx_any = np.nonzero(m)[0]
            cnt = len(idx_any)
            gsum = float(g[idx_any].sum())
            hsum = float(h[idx_any].sum())
            best_gain = 0.0
            best = None
            if depth < self.max_depth and cnt >= 2 * min_leaf:
                base = gsum * gsum / cnt
                for j in range(d):
                    col = order[:, j]
                    idx = col[m[col]]  # node samples in feature-j sorted order
                    xs = X[idx, j]
                    cg = np.cumsum(g[idx])
                    pos = np.arange(1, cnt)
                    valid = xs[:-1] < xs[1:]
                    if min_leaf > 1:
                        valid = valid & (pos >= min_leaf) & (cnt - pos >= min_leaf)
                    if not valid.any():
                        continue
                    gl = cg[:-1]
                    gain = gl * gl / pos + (gsum - gl) ** 2 / (cnt - pos) - base
                    gain = np.where(valid, gain, -np.inf)
                    k = int(np.argmax(gain))
                    if gain[k] > best_gain + 1e-12:
                        best_gain = float(gain[k])
                        best = (j, (xs[k] + xs[k + 1]) / 2.0, idx[: k + 1], idx[k + 1 :])
            if best is None:
                v = gsum / (hsum + self.reg_lambda)
                value[node] = float(np.clip(v, -_LEAF_CLIP, _LEAF_CLIP))
                leaf_of[idx_any] = node
                continue
            j, thr, lidx, ridx = best
            feature[node] = j
            threshold[node] = float(thr)
            lnode, rnode = new_node(), new_node()
            left[node], right[node] = lnode, rnode
            lmask = np.zeros(n, dtype=bool)
            lmask[lidx] = True
            rmask = np.zeros(n, dtype=bool)
            rmask[ridx] = True
            stack.append((rnode, rmask, depth + 1))
            stack.append((lnode, lmask, depth + 1))
        tree = _Tree(
            feature=np.asarray(feature, dtype=np.intp),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.intp),
            right=np.asarray(right, dtype=np.intp),
            value=np.asarray(value, dtype=np.float64),
        )
        return tree, leaf_of

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.feature_order is not None and X.shape[1] != len(self.feature_order):
            raise ValueError(
                f"feature length {X.shape[1]} does not match model order "
                f"({len(self.feature_order)} features)"
            )
        raw = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            raw += self.learning_rate * tree.apply(X)
        return raw

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_raw(X))

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "direction": self.direction,
            "feature_order": self.feature_order,
            "params": self.get_params(),
            "base_score": self.base_score_,
            "learning_rate": self.learning_rate,
            "train_losses": self.train_losses_,
            "trees": [t.to_lists() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtClassifier":
        try:
            if d["format"] != MODEL_FORMAT:
                raise ModelFormatError(f"not a {MODEL_FORMAT} document: {d.get('format')!r}")
            if d["format_version"] != MODEL_FORMAT_VERSION:
                raise ModelFormatError(
                    f"model format version {d['format_version']} is incompatible "
                    f"with supported version {MODEL_FORMAT_VERSION}"
                )
            model = cls(**d["params"])
            model.direction = d["direction"]
            model.feature_order = d["feature_order"]
            model.base_score_ = float(d["base_score"])
            model.learning_rate = float(d["learning_rate"])
            model.train_losses_ = list(d.get("train_losses", []))
            model.trees_ = [_Tree.from_lists(t) for t in d["trees"]]
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"malformed model document: {exc}") from exc
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GbdtClassifier":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ModelFormatError(f"unreadable model file {path}: not an object")
        return cls.from_dict(d)


def save_model(model: GbdtClassifier, path) -> None:
    model.save(path)


def load_model(path) -> GbdtClassifier:
    return GbdtClassifier.load(path)
