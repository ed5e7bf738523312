"""Bootstrap test of whether a candidate feature block can lower a predictor's loss.

A squared-loss boosted regressor of the candidate onto the standardized
descent direction gives the best-aligned transform g*; the statistic is
sqrt(n) times the empirical covariance of g*(X') with that direction. The
null distribution comes from refitting after drawing the direction with
replacement independently of the candidate rows, which keeps both marginals
and destroys their dependence.

By default the candidate rows are kept as observed. Resampling them with
replacement as well (``candidate_resampling="bootstrap"``) duplicates about
a third of the rows, which removes split thresholds and makes the refitted
trees overfit less than on the real data; the null then sits too low and
the test rejects about twice as often as its nominal level.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import standardize
from .gbrt import BoostedModel, BoostParams, _as_matrix, fit_predict
from .gradients import GradientVector

WORKERS_ENV = "FEATPROBE_WORKERS"
RESAMPLING = ("fixed", "bootstrap")


@dataclass(frozen=True)
class TestConfig:
    __test__ = False  # not a pytest class

    n_bootstrap: int = 100
    alpha: float = 0.05
    regressor: BoostParams = field(default_factory=BoostParams)
    seed: int = 0
    candidate_resampling: str = "fixed"

    def __post_init__(self):
        if self.candidate_resampling not in RESAMPLING:
            raise ValueError(f"candidate_resampling must be one of {RESAMPLING}")
        if int(self.n_bootstrap) < 1:
            raise ValueError("n_bootstrap must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.regressor.loss != "squared":
            raise ValueError("g* is always fitted with squared loss")
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic_v: float
    null_sample: np.ndarray
    p_value: float
    p_smoothed: float
    utility_score: float
    null_mean: float
    null_std: float
    n: int
    candidate_names: tuple[str, ...]
    config: TestConfig
    loss_id: str = "squared"

    @property
    def reject(self) -> bool:
        """True when the null of no utility is rejected at ``config.alpha``."""
        return self.p_value <= self.config.alpha

    def to_dict(self) -> dict:
        return {
            "candidate": list(self.candidate_names),
            "n": self.n,
            "loss": self.loss_id,
            "statistic_v": self.statistic_v,
            "p_value": self.p_value,
            "p_smoothed": self.p_smoothed,
            "utility_score": self.utility_score,
            "null_mean": self.null_mean,
            "null_std": self.null_std,
            "n_bootstrap": self.config.n_bootstrap,
            "seed": self.config.seed,
            "regressor_params": asdict(self.config.regressor),
            "alpha": self.config.alpha,
            "candidate_resampling": self.config.candidate_resampling,
            "null_sample": [float(t) for t in self.null_sample],
        }


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def fit_g_star(candidate, grad: GradientVector, params: BoostParams = BoostParams()) -> BoostedModel:
    """Least-squares boosted fit of the candidate block onto the descent direction."""
    X = _as_matrix(candidate)
    if len(X) != len(grad.standardized):
        raise ValueError(f"candidate has {len(X)} rows, gradient has {len(grad.standardized)}")
    return fit_predict(X, grad.standardized, params)[0]


def k_statistic(g_pred, lambda_std) -> float:
    """sqrt(n) * empirical covariance of g*(X') and the standardized direction."""
    g = np.asarray(g_pred, dtype=float)
    lam = np.asarray(lambda_std, dtype=float)
    if g.shape != lam.shape or g.ndim != 1 or g.size == 0:
        raise ValueError(f"length mismatch: {g.shape} vs {lam.shape}")
    n = g.size
    if np.all(g == g[0]) or np.all(lam == lam[0]):
        return 0.0
    return float(np.sqrt(n) * np.mean((g - np.mean(g)) * (lam - np.mean(lam))))


def _trial_statistic(X, lambda_hat, params, seed, trial, resample_rows):
    n = len(lambda_hat)
    x_seq, lam_seq = np.random.SeedSequence([seed, trial]).spawn(2)
    if resample_rows:
        X = X[np.random.default_rng(x_seq).integers(0, n, n)]
    lam = lambda_hat[np.random.default_rng(lam_seq).integers(0, n, n)]
    z, st = standardize(lam)
    if st.std == 0:
        return 0.0
    _, pred = fit_predict(X, z, params)
    return k_statistic(pred, z)


def _run_trials(payload):
    X, lambda_hat, config, trials = payload
    resample = config.candidate_resampling == "bootstrap"
    return [
        _trial_statistic(X, lambda_hat, config.regressor, config.seed, t, resample)
        for t in trials
    ]


def bootstrap_null(candidate, lambda_hat, config: TestConfig, workers: int = 1) -> np.ndarray:
    """Null sample t_1..t_N. Trial i draws from streams seeded by (seed, i) only,
    so the result does not depend on ``workers``."""
    X = _as_matrix(candidate)
    lambda_hat = np.asarray(lambda_hat, dtype=float)
    n = len(lambda_hat)
    if n < 2:
        raise ValueError("bootstrap needs at least 2 rows")
    if len(X) != n:
        raise ValueError(f"candidate has {len(X)} rows, direction has {n}")
    n_boot = int(config.n_bootstrap)
    if np.all(lambda_hat == lambda_hat[0]):
        return np.zeros(n_boot)

    workers = min(resolve_workers(workers), n_boot)
    if workers == 1:
        return np.array(_run_trials((X, lambda_hat, config, range(n_boot))))
    chunks = np.array_split(np.arange(n_boot), workers)
    payloads = [(X, lambda_hat, config, c.tolist()) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_trials, payloads))
    return np.array([t for part in parts for t in part])


def relevance_test(
    candidate,
    grad: GradientVector,
    config: TestConfig = TestConfig(),
    candidate_names=(),
    workers: int = 1,
) -> TestResult:
    X = _as_matrix(candidate)
    n = len(grad.standardized)
    if len(X) != n:
        raise ValueError(f"candidate has {len(X)} rows, gradient has {n}")
    names = tuple(candidate_names) or tuple(f"x{j}" for j in range(X.shape[1]))

    if grad.sigma == 0:
        # the predictor already sits at a stationary point: nothing to gain
        null = np.zeros(config.n_bootstrap)
        return TestResult(
            statistic_v=0.0, null_sample=null, p_value=1.0, p_smoothed=1.0,
            utility_score=0.0, null_mean=0.0, null_std=0.0, n=n,
            candidate_names=names, config=config, loss_id=grad.loss_id,
        )

    _, pred = fit_predict(X, grad.standardized, config.regressor)
    v = k_statistic(pred, grad.standardized)
    null = bootstrap_null(X, grad.standardized, config, workers=workers)
    null_mean = float(np.mean(null))
    null_std = float(np.std(null))
    return TestResult(
        statistic_v=v,
        null_sample=null,
        p_value=float(np.mean(null > v)),
        p_smoothed=float((1 + np.sum(null >= v)) / (len(null) + 1)),
        utility_score=(v - null_mean) / null_std if null_std > 0 else 0.0,
        null_mean=null_mean,
        null_std=null_std,
        n=n,
        candidate_names=names,
        config=config,
        loss_id=grad.loss_id,
    )
