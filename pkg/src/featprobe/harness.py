"""Ablation protocol: actual utility by re-training versus predicted utility by the test."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .dataset import Dataset, FoldAssignment, assign_folds
from .gbrt import BoostParams, fit_predict
from .gradients import cross_entropy_loss, gradient_vector, ndcg, squared_loss
from .utility import TestConfig, TestResult, relevance_test

log = logging.getLogger(__name__)

LEARNER_LOSS = {"squared": "squared", "cross_entropy": "logistic", "ndcg": "squared"}


@dataclass(frozen=True)
class AblationRecord:
    feature: str
    actual_delta_loss: float
    actual_significant: bool
    predicted_p: float
    predicted_score: float
    actual_pct: float = 0.0
    predicted_pct: float = 0.0
    actual_p: float = 1.0


@dataclass(frozen=True)
class ActualUtility:
    delta: float
    full_losses: np.ndarray
    ablated_losses: np.ndarray
    p_value: float
    significant: bool


@dataclass(frozen=True)
class CalibrationSummary:
    rate: float
    ci_low: float
    ci_high: float
    rejections: int
    reps: int
    alpha: float
    n: int
    n_bootstrap: int
    warning: str | None = None


def learner_for(loss_id: str, learner: BoostParams) -> BoostParams:
    """The learner with its training loss matched to the task."""
    return learner.replace(loss=LEARNER_LOSS[loss_id])


def task_loss(loss_id: str, pred, y, groups=None) -> float:
    if loss_id == "squared":
        return float(np.mean(squared_loss(pred, y)))
    if loss_id == "cross_entropy":
        return float(np.mean(cross_entropy_loss(pred, y)))
    if loss_id == "ndcg":
        return float(1.0 - np.mean(ndcg(pred, y, groups)))
    raise ValueError(f"unknown loss {loss_id!r}")


def cross_val_predict(X, y, loss_id, learner, folds: FoldAssignment, groups=None):
    """Out-of-fold predictions and the task loss on each held-out fold."""
    learner = learner_for(loss_id, learner)
    oof = np.empty(len(y))
    losses = []
    for train, test in folds:
        if X.shape[1] == 0:
            # no inputs left: the best constant predictor
            model, _ = fit_predict(np.zeros((len(train), 1)), y[train], learner)
            oof[test] = model.predict(np.zeros((len(test), 1)))
        else:
            model, _ = fit_predict(X[train], y[train], learner)
            oof[test] = model.predict(X[test])
        losses.append(task_loss(loss_id, oof[test], y[test], None if groups is None else groups[test]))
    return oof, np.array(losses)


def _inputs(ds: Dataset, exclude=None) -> np.ndarray:
    return ds.matrix([s for s in ds.feature_sources if s != exclude])


def _significance(full_losses, ablated_losses, level=0.05):
    diff = ablated_losses - full_losses
    if np.all(diff == diff[0]):
        return 1.0, False
    p = float(stats.ttest_rel(ablated_losses, full_losses).pvalue)
    return p, p < level


def actual_utility(
    ds: Dataset, feature: str, learner: BoostParams, folds: FoldAssignment, loss_id: str,
    full_losses=None,
) -> ActualUtility:
    """Mean fold-wise increase in task loss when the feature is removed and the model re-trained."""
    if feature not in ds.feature_sources:
        raise ValueError(f"{feature!r} is not a feature of this dataset")
    groups = ds.group_ids
    if full_losses is None:
        _, full_losses = cross_val_predict(_inputs(ds), ds.y, loss_id, learner, folds, groups)
    _, ablated = cross_val_predict(_inputs(ds, feature), ds.y, loss_id, learner, folds, groups)
    p, significant = _significance(full_losses, ablated)
    return ActualUtility(
        delta=float(np.mean(ablated - full_losses)),
        full_losses=np.asarray(full_losses),
        ablated_losses=ablated,
        p_value=p,
        significant=significant,
    )


def _gradient_for(ds, feature, learner, folds, loss_id, train_gradients, oof=None):
    X = _inputs(ds, feature)
    groups = ds.group_ids
    if train_gradients:
        if X.shape[1] == 0:
            X = np.zeros((ds.n_rows, 1))
        _, pred = fit_predict(X, ds.y, learner_for(loss_id, learner))
    elif oof is not None:
        pred = oof
    else:
        pred, _ = cross_val_predict(X, ds.y, loss_id, learner, folds, groups)
    return gradient_vector(loss_id, pred, ds.y, groups)


def predicted_utility(
    ds: Dataset, feature: str, learner: BoostParams, test: TestConfig, folds: FoldAssignment,
    loss_id: str, workers: int = 1, train_gradients: bool = False,
) -> TestResult:
    """Run the relevance test for a held-out feature against the ablated model's gradients.

    Gradients come from cross-validated (out-of-fold) predictions unless
    ``train_gradients`` asks for in-sample predictions of a model fitted on all rows.
    """
    if feature not in ds.feature_sources:
        raise ValueError(f"{feature!r} is not a feature of this dataset")
    grad = _gradient_for(ds, feature, learner, folds, loss_id, train_gradients)
    return relevance_test(ds.matrix([feature]), grad, test, candidate_names=ds.resolve(feature), workers=workers)


def range_percent(values) -> np.ndarray:
    """Min-max scale to [0, 100]; a zero range maps everything to 0."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return 100.0 * (v - lo) / (hi - lo)


def ablate(
    ds: Dataset, loss_id: str, learner: BoostParams = BoostParams(), test: TestConfig = TestConfig(),
    folds: FoldAssignment | None = None, features=None, workers: int = 1,
    train_gradients: bool = False, fold_seed: int = 0, k: int = 10,
) -> list[AblationRecord]:
    """Actual and predicted utility of every feature, percentages filled in."""
    ds.check_task(loss_id)
    folds = folds if folds is not None else assign_folds(ds.n_rows, k, fold_seed, ds.group_ids)
    groups = ds.group_ids
    _, full_losses = cross_val_predict(_inputs(ds), ds.y, loss_id, learner, folds, groups)
    log.info("full model: mean fold loss %.6g", full_losses.mean())

    raw = []
    for feature in (features if features is not None else ds.feature_sources):
        if feature not in ds.feature_sources:
            raise ValueError(f"{feature!r} is not a feature of this dataset")
        oof, ablated = cross_val_predict(_inputs(ds, feature), ds.y, loss_id, learner, folds, groups)
        p_actual, significant = _significance(full_losses, ablated)
        grad = _gradient_for(ds, feature, learner, folds, loss_id, train_gradients, oof=oof)
        result = relevance_test(
            ds.matrix([feature]), grad, test, candidate_names=ds.resolve(feature), workers=workers
        )
        delta = float(np.mean(ablated - full_losses))
        log.info("%s: dL=%.4g p_actual=%.3g test p=%.3g score=%.3g",
                 feature, delta, p_actual, result.p_value, result.utility_score)
        raw.append((feature, delta, significant, p_actual, result))

    actual_pct = range_percent([r[1] for r in raw])
    predicted_pct = range_percent([r[4].utility_score for r in raw])
    return [
        AblationRecord(
            feature=f, actual_delta_loss=delta, actual_significant=bool(sig),
            predicted_p=res.p_value, predicted_score=res.utility_score,
            actual_pct=float(a), predicted_pct=float(p), actual_p=p_act,
        )
        for (f, delta, sig, p_act, res), a, p in zip(raw, actual_pct, predicted_pct)
    ]


def compare_report(records, dataset: str = "", loss: str = "", threshold: float = 20.0,
                   alpha: float = 0.05) -> dict:
    """Report document with the recall summary.

    A miss is a feature the test calls useless (p > alpha) whose actual
    utility exceeds ``threshold`` percent of the range.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError("a comparison report needs at least two features")
    missed = [r.feature for r in records if r.predicted_p > alpha and r.actual_pct > threshold]
    return {
        "dataset": dataset,
        "loss": loss,
        "records": [asdict(r) for r in records],
        "recall_summary": {
            "alpha": alpha,
            "threshold_pct": threshold,
            "n_features": len(records),
            "n_predicted_useless": sum(r.predicted_p > alpha for r in records),
            "n_missed": len(missed),
            "missed": missed,
        },
    }


def write_plot_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "actual_pct", "predicted_pct", "p_value", "significant"])
        for r in records:
            writer.writerow([r.feature, repr(r.actual_pct), repr(r.predicted_pct),
                             repr(r.predicted_p), int(r.actual_significant)])


def format_table(records) -> str:
    lines = [f"{'feature':<20} {'dL':>11} {'sig':>3} {'actual%':>8} {'p':>6} {'score':>8} {'pred%':>7}"]
    for r in records:
        lines.append(
            f"{r.feature:<20} {r.actual_delta_loss:>11.4g} {'*' if r.actual_significant else '':>3} "
            f"{r.actual_pct:>8.1f} {r.predicted_p:>6.2f} {r.predicted_score:>8.2f} {r.predicted_pct:>7.1f}"
        )
    return "\n".join(lines)


def gradient_mean_ratio(raw) -> float:
    """|mean| / std of raw gradients; near zero when the predictor is optimal in its class."""
    raw = np.asarray(raw, dtype=float)
    sd = float(np.std(raw))
    return float(abs(np.mean(raw)) / sd) if sd > 0 else 0.0


def null_calibration(
    n: int, reps: int, test: TestConfig = TestConfig(), seed: int = 0,
    learner: BoostParams = BoostParams(), k: int = 10, workers: int = 1,
) -> CalibrationSummary:
    """Empirical rejection rate of the test when the candidate is independent of everything.

    Each repetition draws x, y = x + noise and an unrelated candidate,
    trains f0 on x by k-fold cross-validation and tests the candidate
    against the out-of-fold gradients.
    """
    if reps < 50:
        raise ValueError("null_calibration needs reps >= 50")
    warning = None
    if test.n_bootstrap == 1:
        warning = "n_bootstrap=1: each p-value is 0 or 1, the rejection rate is degenerate"
        warnings.warn(warning)
    rejections = 0
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
        x = rng.standard_normal(n)
        y = x + rng.standard_normal(n)
        candidate = rng.standard_normal(n)
        folds = assign_folds(n, k, seed + rep)
        oof, _ = cross_val_predict(x[:, None], y, "squared", learner, folds)
        grad = gradient_vector("squared", oof, y)
        config = TestConfig(
            n_bootstrap=test.n_bootstrap, alpha=test.alpha, regressor=test.regressor,
            seed=test.seed + rep, candidate_resampling=test.candidate_resampling,
        )
        rejections += relevance_test(candidate, grad, config, workers=workers).reject
    ci = stats.binomtest(rejections, reps).proportion_ci(confidence_level=0.95)
    return CalibrationSummary(
        rate=rejections / reps, ci_low=float(ci.low), ci_high=float(ci.high),
        rejections=int(rejections), reps=reps, alpha=test.alpha, n=n,
        n_bootstrap=test.n_bootstrap, warning=warning,
    )
