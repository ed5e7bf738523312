"""Gradient-boosted regression trees (squared and logistic loss).

Trees are grown depth-first with an exhaustive threshold scan over presorted
columns. Candidate thresholds are midpoints between consecutive distinct
values; among equal gains the lowest column index and then the lowest
threshold win, so a fit is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

MODEL_FORMAT = "featprobe.boosted_model"
MODEL_VERSION = 1
LOSSES = ("squared", "logistic")
_PROB_EPS = 1e-12


@dataclass(frozen=True)
class BoostParams:
    n_rounds: int = 50
    max_depth: int = 2
    learning_rate: float = 0.1
    min_leaf: int = 5
    loss: str = "squared"
    seed: int = 0  # unused: no row or column subsampling

    def __post_init__(self):
        for name in ("n_rounds", "max_depth", "min_leaf"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")

    def replace(self, **changes) -> "BoostParams":
        return BoostParams(**{**asdict(self), **changes})


@dataclass(frozen=True)
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.maximum(feat, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
        )


@dataclass(frozen=True)
class BoostedModel:
    base_score: float
    trees: tuple[Tree, ...]
    params: BoostParams
    n_features: int
    feature_names: tuple[str, ...] = field(default=())

    def decision_function(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} feature columns, got {X.shape[1]}")
        score = np.full(len(X), self.base_score)
        for tree in self.trees:
            score += self.params.learning_rate * tree.predict(X)
        return score

    def predict(self, X) -> np.ndarray:
        score = self.decision_function(X)
        if self.params.loss == "logistic":
            return _sigmoid(score)
        return score

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "params": asdict(self.params),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError(f"not a version-{MODEL_VERSION} {MODEL_FORMAT} document")
        return cls(
            base_score=float(d["base_score"]),
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            params=BoostParams(**d["params"]),
            n_features=int(d["n_features"]),
            feature_names=tuple(d.get("feature_names", ())),
        )


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("features must be a 1-d or 2-d array")
    return X


@njit(cache=True)
def _grow_tree(X, sidx, buf, resid, hess, use_hess, max_depth, min_leaf,
               feature, threshold, left, right, value, leaf_of):
    """Grow one tree in place; returns the number of nodes used.

    ``sidx`` holds, per column, the row ids sorted by that column. Every node
    owns the same contiguous range [start, end) in all columns; splitting a
    node stably partitions that range, so each child stays presorted.
    """
    d, n = sidx.shape
    stack = np.empty((2 * max_depth + 2, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    feature[0] = -1
    while top > 0:
        top -= 1
        node, start, end, depth = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        m = end - start
        best_gain = -np.inf
        best_j = -1
        best_p = -1
        if depth < max_depth and m >= 2 * min_leaf:
            node_ss = 0.0
            for p in range(start, end):
                r = resid[sidx[0, p]]
                node_ss += r * r
            for j in range(d):
                total = 0.0
                for p in range(start, end):
                    total += resid[sidx[j, p]]
                base = total * total / m
                acc = 0.0
                for p in range(start, end - min_leaf):
                    acc += resid[sidx[j, p]]
                    n_left = p - start + 1
                    if n_left < min_leaf:
                        continue
                    if not X[sidx[j, p], j] < X[sidx[j, p + 1], j]:
                        continue
                    rest = total - acc
                    gain = acc * acc / n_left + rest * rest / (m - n_left) - base
                    if gain > best_gain:
                        best_gain = gain
                        best_j = j
                        best_p = p
            if best_j >= 0 and not best_gain > 1e-10 * node_ss:
                best_j = -1
        if best_j < 0:
            if use_hess:
                g = 0.0
                h = 0.0
                for p in range(start, end):
                    g += resid[sidx[0, p]]
                    h += hess[sidx[0, p]]
                value[node] = g / h if h > 0 else 0.0
            else:
                g = 0.0
                for p in range(start, end):
                    g += resid[sidx[0, p]]
                value[node] = g / m
            feature[node] = -1
            for p in range(start, end):
                leaf_of[sidx[0, p]] = node
            continue

        lo = X[sidx[best_j, best_p], best_j]
        hi = X[sidx[best_j, best_p + 1], best_j]
        thr = 0.5 * (lo + hi)
        if not thr < hi:
            thr = lo
        n_left = best_p - start + 1
        for j in range(d):
            a = start
            b = start + n_left
            for p in range(start, end):
                row = sidx[j, p]
                if X[row, best_j] <= thr:
                    buf[a] = row
                    a += 1
                else:
                    buf[b] = row
                    b += 1
            for p in range(start, end):
                sidx[j, p] = buf[p]
        feature[node] = best_j
        threshold[node] = thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        feature[lc] = -1
        feature[rc] = -1
        stack[top, 0] = rc
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lc
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1
    return n_nodes


@njit(cache=True)
def _boost(X, order, y, base, logistic, n_rounds, max_depth, learning_rate, min_leaf):
    n, d = X.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full((n_rounds, max_nodes), -1, dtype=np.int64)
    threshold = np.zeros((n_rounds, max_nodes))
    left = np.full((n_rounds, max_nodes), -1, dtype=np.int64)
    right = np.full((n_rounds, max_nodes), -1, dtype=np.int64)
    value = np.zeros((n_rounds, max_nodes))
    sizes = np.zeros(n_rounds, dtype=np.int64)
    score = np.full(n, base)
    resid = np.empty(n)
    hess = np.empty(n)
    leaf_of = np.empty(n, dtype=np.int64)
    sidx = np.empty((d, n), dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    n_trees = 0
    for t in range(n_rounds):
        for i in range(n):
            if logistic:
                prob = 0.5 * (1.0 + np.tanh(0.5 * score[i]))
                resid[i] = y[i] - prob
                hess[i] = prob * (1.0 - prob)
            else:
                resid[i] = y[i] - score[i]
        sidx[:, :] = order
        used = _grow_tree(X, sidx, buf, resid, hess, logistic, max_depth, min_leaf,
                          feature[t], threshold[t], left[t], right[t], value[t], leaf_of)
        if used == 1:
            # no admissible split at the root: later rounds would see the same residuals
            break
        for i in range(n):
            score[i] += learning_rate * value[t, leaf_of[i]]
        sizes[t] = used
        n_trees += 1
    return feature, threshold, left, right, value, sizes, n_trees, score


def fit_predict(features, target, params: BoostParams = BoostParams(), feature_names=()):
    """Fit a boosted ensemble and also return its in-sample predictions."""
    X = _as_matrix(features)
    y = np.asarray(target, dtype=float)
    n = len(X)
    if y.shape != (n,):
        raise ValueError(f"target length {y.shape} does not match {n} rows")
    if n < 2 * params.min_leaf:
        raise ValueError(f"need at least {2 * params.min_leaf} rows, got {n}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("features and target must be finite")

    if params.loss == "logistic":
        if np.any((y < 0) | (y > 1)):
            raise ValueError("logistic loss needs targets in [0, 1]")
        p0 = min(max(float(np.mean(y)), _PROB_EPS), 1 - _PROB_EPS)
        base = math.log(p0 / (1 - p0))
    elif np.all(y == y[0]):
        base = float(y[0])
    else:
        base = float(np.mean(y))

    order = np.argsort(X, axis=0, kind="stable").T.copy()
    feature, threshold, left, right, value, sizes, n_trees, score = _boost(
        X, order, y, base, params.loss == "logistic", int(params.n_rounds),
        int(params.max_depth), float(params.learning_rate), int(params.min_leaf),
    )
    trees = [
        Tree(
            feature=feature[t, : sizes[t]].copy(),
            threshold=threshold[t, : sizes[t]].copy(),
            left=left[t, : sizes[t]].copy(),
            right=right[t, : sizes[t]].copy(),
            value=value[t, : sizes[t]].copy(),
        )
        for t in range(n_trees)
    ]

    model = BoostedModel(
        base_score=base,
        trees=tuple(trees),
        params=params,
        n_features=X.shape[1],
        feature_names=tuple(feature_names),
    )
    return model, (_sigmoid(score) if params.loss == "logistic" else score)


def fit(features, target, params: BoostParams = BoostParams(), feature_names=()) -> BoostedModel:
    return fit_predict(features, target, params, feature_names)[0]


def predict(model: BoostedModel, features) -> np.ndarray:
    return model.predict(features)
