"""Label-based feature scores that need no predictor: chi-squared, gain ratio, CFS merit.

Continuous inputs are discretized into equal-frequency bins; a 2-d input is
read as a one-hot block and collapsed to its category codes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BinningSpec:
    n_bins: int = 10
    strategy: str = "equal-frequency"

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.strategy != "equal-frequency":
            raise ValueError(f"unsupported binning strategy {self.strategy!r}")


@dataclass(frozen=True)
class CfsScore:
    merit: float
    delta: float  # merit with the candidate minus merit of ``selected`` alone


def discretize(x, bins: BinningSpec = BinningSpec()) -> np.ndarray:
    """Compact integer codes 0..k-1 for a column or one-hot block."""
    x = np.asarray(x)
    if x.ndim == 2:
        x = np.argmax(x, axis=1) if x.shape[1] > 1 else x[:, 0]
    values, codes = np.unique(x, return_inverse=True)
    if len(values) <= bins.n_bins or x.dtype.kind not in "fc":
        return codes
    edges = np.quantile(x, np.linspace(0, 1, bins.n_bins + 1)[1:-1])
    binned = np.searchsorted(edges, x, side="right")
    return np.unique(binned, return_inverse=True)[1]


def _contingency(a, b) -> np.ndarray:
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    return table


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def chi_squared_score(feature, label, bins: BinningSpec = BinningSpec()) -> float:
    """Pearson chi-squared statistic of the feature-by-label contingency table."""
    table = _contingency(discretize(feature, bins), discretize(label, bins))
    if table.shape[1] < 2 or table.shape[0] < 2:
        return 0.0
    expected = table.sum(1, keepdims=True) * table.sum(0, keepdims=True) / table.sum()
    mask = expected > 0
    return float(np.sum((table[mask] - expected[mask]) ** 2 / expected[mask]))


def gain_ratio_score(feature, label, bins: BinningSpec = BinningSpec()) -> float:
    """Information gain about the label divided by the feature's own entropy (bits)."""
    table = _contingency(discretize(feature, bins), discretize(label, bins))
    h_x = _entropy(table.sum(1))
    if h_x == 0:
        return 0.0
    h_y = _entropy(table.sum(0))
    n = table.sum()
    h_y_given_x = sum(row.sum() / n * _entropy(row) for row in table if row.sum() > 0)
    return float((h_y - h_y_given_x) / h_x)


def abs_correlation(a, b) -> float:
    """Largest absolute Pearson correlation between the columns of two blocks.

    Zero-variance columns count as uncorrelated.
    """
    A = np.asarray(a, dtype=float).reshape(len(a), -1)
    B = np.asarray(b, dtype=float).reshape(len(b), -1)
    A = A - A.mean(0)
    B = B - B.mean(0)
    na = np.sqrt((A**2).sum(0))
    nb = np.sqrt((B**2).sum(0))
    ok_a = na > 1e-12 * np.maximum(1.0, np.abs(A).max(0, initial=0.0))
    ok_b = nb > 1e-12 * np.maximum(1.0, np.abs(B).max(0, initial=0.0))
    if not ok_a.any() or not ok_b.any():
        return 0.0
    r = (A[:, ok_a] / na[ok_a]).T @ (B[:, ok_b] / nb[ok_b])
    return float(min(1.0, np.abs(r).max()))


def merit(k: int, mean_r_cf: float, mean_r_ff: float) -> float:
    """CFS subset merit k*r_cf / sqrt(k + k(k-1)*r_ff)."""
    if k < 1:
        return 0.0
    return k * mean_r_cf / np.sqrt(k + k * (k - 1) * mean_r_ff)


def _subset_merit(columns, label) -> float:
    k = len(columns)
    if k == 0:
        return 0.0
    r_cf = np.mean([abs_correlation(c, label) for c in columns])
    pairs = [abs_correlation(columns[i], columns[j]) for i in range(k) for j in range(i + 1, k)]
    r_ff = float(np.mean(pairs)) if pairs else 0.0
    return float(merit(k, r_cf, r_ff))


def cfs_merit(candidate, selected, label) -> CfsScore:
    """Merit of ``selected`` plus the candidate, and the change the candidate brings."""
    selected = list(selected)
    with_candidate = _subset_merit(selected + [candidate], label)
    return CfsScore(merit=with_candidate, delta=with_candidate - _subset_merit(selected, label))


def score_features(ds, bins: BinningSpec = BinningSpec(), features=None) -> list[dict]:
    """All three scores for each feature source of a dataset.

    The CFS entry is the merit delta of adding the feature to all the others.
    """
    names = list(features) if features is not None else ds.feature_sources
    label = ds.y
    blocks = {name: ds.matrix([name]) for name in ds.feature_sources}
    out = []
    for name in names:
        block = ds.matrix([name])
        others = [b for other, b in blocks.items() if other != name]
        out.append({"feature": name, "method": "chi2", "score": chi_squared_score(block, label, bins)})
        out.append({"feature": name, "method": "gain_ratio", "score": gain_ratio_score(block, label, bins)})
        out.append({"feature": name, "method": "cfs", "score": cfs_merit(block, others, label).delta})
    return out
