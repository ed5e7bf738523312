"""Acceptance gate: each test checks one criterion at its stated tolerance and runtime budget.

Run ``pytest tests/test_acceptance.py`` to get a PASS/FAIL line per criterion
in the terminal summary.
"""

import json
import time

import numpy as np
import pytest

from featprobe.baselines import chi_squared_score, gain_ratio_score
from featprobe.cli import run
from featprobe.dataset import Dataset, assign_folds, load_housing
from featprobe.gbrt import BoostParams, fit_predict
from featprobe.gradients import (
    descent_direction,
    grad_cross_entropy,
    grad_squared,
    gradient_vector,
    lambda_ndcg,
)
from featprobe.harness import ablate, compare_report, cross_val_predict, gradient_mean_ratio, null_calibration
from featprobe.utility import TestConfig, relevance_test, resolve_workers
from oracles import (
    best_stump_objective,
    central_difference,
    half_squared,
    lambda_by_pair_swaps,
    log_loss,
    normalized_covariance,
    stump_splits,
    stump_sse,
)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds
        self.start = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.start

    def ok(self):
        return self.elapsed < self.seconds


def max_rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12)))


@pytest.mark.criterion(1, "analytic gradients and NDCG lambdas match brute-force oracles")
def test_gradient_oracles(record_property):
    budget = Budget(10)
    rng = np.random.default_rng(2024)
    f, y = rng.normal(size=1000) * 3, rng.normal(size=1000) * 3
    err_sq = max_rel_err(grad_squared(f, y), central_difference(half_squared, f, y))
    p, t = rng.uniform(0.02, 0.98, 1000), rng.uniform(0, 1, 1000)
    err_ce = max_rel_err(grad_cross_entropy(p, t), central_difference(log_loss, p, t))
    err_lam = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 9))
        scores = np.round(rng.normal(size=m), 1)
        rel = rng.integers(0, 5, m)
        ours = lambda_ndcg(scores, rel, np.zeros(m))
        err_lam = max(err_lam, float(np.max(np.abs(ours - lambda_by_pair_swaps(list(scores), list(rel))))))
    record_property("detail", f"rel err squared {err_sq:.1e}, cross-entropy {err_ce:.1e}; "
                              f"lambda abs err {err_lam:.1e}; {budget.elapsed:.1f}s")
    assert err_sq <= 1e-6 and err_ce <= 1e-6
    assert err_lam <= 1e-10
    assert budget.ok()


@pytest.mark.criterion(2, "least-squares stump attains the maximal normalized covariance")
def test_least_squares_equals_covariance_maximizer(record_property):
    budget = Budget(5)
    rng = np.random.default_rng(7)
    stump = BoostParams(n_rounds=1, max_depth=1, learning_rate=1.0, min_leaf=1)
    worst = 0.0
    for _ in range(50):
        x = rng.normal(size=20)
        z = descent_direction(rng.normal(size=20)).standardized
        best = best_stump_objective(x, z)
        # enumerated squared-error argmin, and the fitted regressor's own stump
        argmin = min(stump_splits(x), key=lambda t: stump_sse(x, z, t))
        enumerated = normalized_covariance((x <= argmin).astype(float), z)
        _, fitted = fit_predict(x, z, stump)
        worst = max(worst, best - abs(enumerated), best - normalized_covariance(fitted, z))
    record_property("detail", f"largest shortfall from the maximum {worst:.1e}; {budget.elapsed:.2f}s")
    assert worst <= 1e-12
    assert budget.ok()


@pytest.mark.criterion(3, "rejection rate under the null at alpha=0.05")
def test_level_calibration(record_property):
    budget = Budget(600)
    workers = min(4, resolve_workers())
    summary = null_calibration(500, 200, TestConfig(n_bootstrap=100, alpha=0.05), seed=0, workers=workers)
    record_property("detail", f"rate {summary.rate:.3f} ({summary.rejections}/200, "
                              f"95% CI {summary.ci_low:.3f}-{summary.ci_high:.3f}); "
                              f"{workers} worker(s), {budget.elapsed:.0f}s")
    assert 0.01 <= summary.rate <= 0.10
    assert budget.ok()


@pytest.mark.criterion(4, "power against an additive candidate")
def test_power(record_property):
    budget = Budget(600)
    hits = 0
    for rep in range(50):
        rng = np.random.default_rng([4, rep])
        n = 2000
        x1, xc = rng.normal(size=n), rng.normal(size=n)
        y = x1 + 0.5 * xc + rng.normal(size=n)
        oof, _ = cross_val_predict(x1[:, None], y, "squared", BoostParams(), assign_folds(n, 10, rep))
        res = relevance_test(xc, gradient_vector("squared", oof, y), TestConfig(seed=rep))
        hits += res.p_value <= 0.01
    record_property("detail", f"p <= 0.01 in {hits}/50 runs; {budget.elapsed:.0f}s")
    assert hits >= 0.95 * 50
    assert budget.ok()


@pytest.mark.criterion(5, "XOR: single candidate inconclusive, block detected")
def test_xor_block(record_property):
    budget = Budget(300)
    single_quiet = block_hits = 0
    for rep in range(50):
        rng = np.random.default_rng([5, rep])
        n = 1000
        x1 = rng.integers(0, 2, n).astype(float)
        x2 = rng.integers(0, 2, n).astype(float)
        y = np.logical_xor(x1, x2).astype(float)
        oof, _ = cross_val_predict(x1[:, None], y, "cross_entropy", BoostParams(), assign_folds(n, 10, rep))
        grad = gradient_vector("cross_entropy", oof, y)
        single = relevance_test(x2, grad, TestConfig(seed=rep))
        block = relevance_test(np.column_stack([x1, x2]), grad, TestConfig(seed=rep))
        single_quiet += abs(single.utility_score) < 2
        block_hits += block.p_value <= 0.01
    record_property("detail", f"|score| < 2 for X2 alone in {single_quiet}/50; "
                              f"block p <= 0.01 in {block_hits}/50; {budget.elapsed:.0f}s")
    assert single_quiet >= 0.90 * 50
    assert block_hits >= 0.95 * 50
    assert budget.ok()


@pytest.mark.criterion(6, "HOUSING: no feature called useless has actual utility above 20%")
def test_housing_recall(record_property):
    budget = Budget(600)
    ds = load_housing()
    records = ablate(ds, "squared", BoostParams(), TestConfig(seed=7), fold_seed=7, k=10)
    summary = compare_report(records, dataset="housing", loss="squared")["recall_summary"]
    record_property("detail", f"{len(records)} features, {summary['n_predicted_useless']} with p > 0.05, "
                              f"{summary['n_missed']} missed {summary['missed']}; {budget.elapsed:.0f}s")
    assert len(records) == 13
    assert summary["n_missed"] == 0
    assert budget.ok()


@pytest.mark.criterion(7, "cross-validated predictor leaves mean-zero gradients")
def test_gradient_mean_near_zero(record_property):
    rng = np.random.default_rng(77)
    n = 5000
    X = rng.normal(size=(n, 3))
    y = X[:, 0] + np.sin(2 * X[:, 1]) + 0.5 * X[:, 2] ** 2 + rng.normal(size=n)
    oof, _ = cross_val_predict(X, y, "squared", BoostParams(), assign_folds(n, 10, 0))
    ratio = gradient_mean_ratio(grad_squared(oof, y))
    record_property("detail", f"|mean(lambda)|/std(lambda) = {ratio:.4f}")
    assert ratio < 0.05


@pytest.mark.criterion(8, "test output is byte-identical across worker counts")
def test_worker_determinism(tmp_path, record_property):
    rng = np.random.default_rng(8)
    n = 400
    table = np.column_stack([rng.normal(size=n) for _ in range(3)])
    y = table[:, 0] + 0.3 * table[:, 2] + rng.normal(size=n)
    data = tmp_path / "d.csv"
    rows = np.column_stack([table, y]).tolist()
    data.write_text("f0,x1,x9,y\n" + "\n".join(",".join(map(repr, r)) for r in rows) + "\n")
    outputs = {}
    for workers in (1, 2, 8):
        out = tmp_path / f"w{workers}.json"
        argv = ["test", "--data", str(data), "--label", "y", "--prediction", "f0", "--candidate", "x9",
                "--candidate", "x1", "--bootstrap", "40", "--seed", "42", "--workers", str(workers),
                "--out", str(out)]
        assert run(argv) == 0
        outputs[workers] = out.read_bytes()
    same = outputs[1] == outputs[2] == outputs[8]
    record_property("detail", f"{len(outputs[1])} bytes, identical={same}, "
                              f"p={json.loads(outputs[1])['p_value']}")
    assert same


@pytest.mark.criterion(9, "heuristics overrate a redundant copy, the relevance test does not")
def test_heuristic_contrast(record_property):
    budget = Budget(120)
    outcomes = []
    for seed in range(3):
        rng = np.random.default_rng([9, seed])
        n = 2000
        a, c = rng.normal(size=n), rng.normal(size=n)
        y = (rng.random(n) < 1 / (1 + np.exp(-(2 * a + c)))).astype(float)
        ds = Dataset(columns={"a1": a.copy(), "a2": a.copy(), "c": c, "y": y}, label="y")
        heuristics_prefer_copy = (chi_squared_score(a, y) > chi_squared_score(c, y)
                                  and gain_ratio_score(a, y) > gain_ratio_score(c, y))
        records = {r.feature: r for r in ablate(ds, "cross_entropy", fold_seed=seed,
                                                test=TestConfig(seed=seed), features=["a1", "c"])}
        test_prefers_c = records["c"].predicted_score > records["a1"].predicted_score
        outcomes.append((heuristics_prefer_copy, test_prefers_c,
                         records["a1"].predicted_score, records["c"].predicted_score))
    record_property("detail", "; ".join(
        f"heuristics>copy={h} score(a1)={s1:.2f} score(c)={s2:.2f}" for h, _, s1, s2 in outcomes
    ) + f"; {budget.elapsed:.0f}s")
    assert all(h and t for h, t, _, _ in outcomes)
    assert budget.ok()
