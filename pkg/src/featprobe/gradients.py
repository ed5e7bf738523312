"""Per-instance loss gradients and the standardized descent direction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import standardize

LOSSES = ("squared", "cross_entropy", "ndcg")
PROB_EPS = 1e-12


@dataclass(frozen=True)
class GradientVector:
    """Raw gradient ``raw`` and the unit-variance descent direction derived from it.

    ``standardized`` is the centered, negated raw gradient divided by
    ``sigma`` (the population std of ``raw``); it is all zeros when sigma is 0.
    """

    raw: np.ndarray
    standardized: np.ndarray
    sigma: float
    loss_id: str

    def __len__(self):
        return len(self.raw)


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def squared_loss(pred, label) -> np.ndarray:
    pred, label = _pair(pred, label)
    return 0.5 * (pred - label) ** 2


def grad_squared(pred, label) -> np.ndarray:
    """d/df of (f - y)^2 / 2."""
    pred, label = _pair(pred, label)
    return pred - label


def cross_entropy_loss(prob, label) -> np.ndarray:
    prob, label = _pair(prob, label)
    f = np.clip(prob, PROB_EPS, 1 - PROB_EPS)
    return -(label * np.log(f) + (1 - label) * np.log1p(-f))


def grad_cross_entropy(prob, label) -> np.ndarray:
    """Derivative of the log-loss with respect to the predicted probability."""
    prob, label = _pair(prob, label)
    if np.any((label < 0) | (label > 1)):
        raise ValueError("cross-entropy labels must lie in [0, 1]")
    f = np.clip(prob, PROB_EPS, 1 - PROB_EPS)
    return (f - label) / (f * (1 - f))


def _dcg_terms(n):
    return 1.0 / np.log2(np.arange(2, n + 2))


def _check_ranking_args(scores, relevance, groups):
    scores = np.asarray(scores, dtype=float)
    relevance = np.asarray(relevance)
    groups = np.asarray(groups)
    if not (scores.shape == relevance.shape == groups.shape) or scores.ndim != 1:
        raise ValueError("scores, relevance and groups must be 1-d of equal length")
    if np.any(relevance < 0):
        raise ValueError("relevance labels must be non-negative")
    return scores, relevance.astype(float), groups


def _query_slices(groups):
    """Row index arrays, one per query, in first-appearance-independent sorted id order."""
    _, inverse = np.unique(groups, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.flatnonzero(np.diff(inverse[order])) + 1
    return np.split(order, bounds)


def ndcg(scores, relevance, groups) -> np.ndarray:
    """Per-query NDCG of the ranking induced by ``scores``; queries with IDCG 0 score 1."""
    scores, relevance, groups = _check_ranking_args(scores, relevance, groups)
    out = []
    for rows in _query_slices(groups):
        gains = 2.0 ** relevance[rows] - 1
        disc = _dcg_terms(len(rows))
        ideal = np.sum(np.sort(gains)[::-1] * disc)
        if ideal <= 0:
            out.append(1.0)
            continue
        ranked = np.argsort(-scores[rows], kind="stable")
        out.append(float(np.sum(gains[ranked] * disc) / ideal))
    return np.array(out)


def lambda_ndcg(scores, relevance, groups) -> np.ndarray:
    """LambdaRank-style pseudo-gradients of NDCG.

    For every pair (i, j) of a query with rel_i > rel_j the weight
    |dNDCG_ij| / (1 + exp(s_i - s_j)) is subtracted from lambda_i and added to
    lambda_j, so documents that should move up get negative gradients. Ranks
    come from a stable descending sort of the current scores.
    """
    scores, relevance, groups = _check_ranking_args(scores, relevance, groups)
    lam = np.zeros_like(scores)
    for rows in _query_slices(groups):
        if len(rows) < 2:
            continue
        s = scores[rows]
        rel = relevance[rows]
        gains = 2.0 ** rel - 1
        ideal = np.sum(np.sort(gains)[::-1] * _dcg_terms(len(rows)))
        if ideal <= 0:
            continue
        ranked = np.argsort(-s, kind="stable")
        disc = np.empty(len(rows))
        disc[ranked] = _dcg_terms(len(rows))

        better = rel[:, None] > rel[None, :]
        delta = np.abs(gains[:, None] - gains[None, :]) * np.abs(disc[:, None] - disc[None, :]) / ideal
        # 1 / (1 + exp(s_i - s_j)) written via tanh to stay finite for large gaps
        weight = 0.5 * (1.0 - np.tanh(0.5 * (s[:, None] - s[None, :])))
        w = np.where(better, delta * weight, 0.0)
        lam[rows] = w.T.sum(axis=1) - w.sum(axis=1)
    return lam


def raw_gradient(loss_id: str, pred, label, groups=None) -> np.ndarray:
    if loss_id == "squared":
        return grad_squared(pred, label)
    if loss_id == "cross_entropy":
        return grad_cross_entropy(pred, label)
    if loss_id == "ndcg":
        if groups is None:
            raise ValueError("ndcg gradients need query groups")
        return lambda_ndcg(pred, label, groups)
    raise ValueError(f"unknown loss {loss_id!r}; expected one of {LOSSES}")


def descent_direction(raw, loss_id: str = "squared") -> GradientVector:
    raw = np.asarray(raw, dtype=float)
    z, st = standardize(raw)
    return GradientVector(raw=raw, standardized=-z if st.std > 0 else z, sigma=st.std, loss_id=loss_id)


def gradient_vector(loss_id: str, pred, label, groups=None) -> GradientVector:
    """Convenience: raw gradient at ``pred`` followed by :func:`descent_direction`."""
    return descent_direction(raw_gradient(loss_id, pred, label, groups), loss_id)
