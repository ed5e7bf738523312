"""featprobe: test whether a candidate feature can reduce a predictor's loss without re-training."""

from .dataset import Dataset, Schema, load_csv, split_folds, standardize
from .gbrt import BoostedModel, BoostParams, fit, predict
from .gradients import GradientVector, descent_direction, gradient_vector, lambda_ndcg
from .utility import TestConfig, TestResult, bootstrap_null, fit_g_star, k_statistic, relevance_test

__version__ = "0.1.0"

__all__ = [
    "BoostParams",
    "BoostedModel",
    "Dataset",
    "GradientVector",
    "Schema",
    "TestConfig",
    "TestResult",
    "bootstrap_null",
    "descent_direction",
    "fit",
    "fit_g_star",
    "gradient_vector",
    "k_statistic",
    "lambda_ndcg",
    "load_csv",
    "predict",
    "relevance_test",
    "split_folds",
    "standardize",
]
