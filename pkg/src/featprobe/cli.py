"""featprobe command line: test, ablate, baselines, calibrate.

Exit status: 0 on success, 2 on usage errors, 1 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .baselines import BinningSpec, score_features
from .dataset import FeatprobeError, Schema, load_csv
from .gbrt import BoostParams
from .gradients import LOSSES, gradient_vector
from .harness import (
    ablate,
    compare_report,
    format_table,
    gradient_mean_ratio,
    null_calibration,
    write_plot_csv,
)
from .utility import RESAMPLING, TestConfig, relevance_test, resolve_workers

log = logging.getLogger("featprobe")


def dumps(obj) -> str:
    # fixed key order + repr floats -> byte-identical output for identical runs
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _add_data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--schema", help="JSON sidecar with label/prediction/group/candidates/types")
    p.add_argument("--label", help="label column (required unless given in --schema)")
    p.add_argument("--type", action="append", default=[], metavar="COL=KIND",
                   help="type hint, KIND is numeric or categorical (repeatable)")
    p.add_argument("--max-onehot", type=int, default=32)


def _add_booster_args(p, prefix, what):
    g = p.add_argument_group(f"{what} (boosted trees)")
    g.add_argument(f"--{prefix}rounds", type=int)
    g.add_argument(f"--{prefix}depth", type=int)
    g.add_argument(f"--{prefix}learning-rate", type=float)
    g.add_argument(f"--{prefix}min-leaf", type=int)


def _add_test_args(p):
    p.add_argument("--bootstrap", type=int, help="bootstrap rounds (default 100)")
    p.add_argument("--alpha", type=float, help="test level (default 0.05)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--resample", choices=RESAMPLING,
                   help="candidate rows in bootstrap trials: kept fixed (default) or resampled")
    p.add_argument("--config", help="JSON config with 'test', 'regressor' and 'learner' sections")
    p.add_argument("--workers", type=int, help="worker processes (default: $FEATPROBE_WORKERS or all cores)")
    _add_booster_args(p, "", "g* regressor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featprobe",
        description="Test whether candidate features could lower a trained predictor's loss.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="relevance test of candidate column(s) against given predictions")
    _add_data_args(p)
    p.add_argument("--prediction", help="column with the current predictor's outputs")
    p.add_argument("--group", help="query id column (required for --loss ndcg)")
    p.add_argument("--candidate", action="append", default=[],
                   help="candidate column; repeat to test a block")
    p.add_argument("--loss", choices=LOSSES, default="squared")
    p.add_argument("--out", help="TestResult JSON path")
    _add_test_args(p)

    p = sub.add_parser("ablate", help="actual (re-training) vs predicted utility of every feature")
    _add_data_args(p)
    p.add_argument("--group", help="query id column (ranking only)")
    p.add_argument("--loss", choices=LOSSES, default="squared")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--feature", action="append", help="restrict to these features (repeatable)")
    p.add_argument("--threshold", type=float, default=20.0, help="recall threshold in percent of range")
    p.add_argument("--train-gradients", action="store_true",
                   help="take gradients from in-sample instead of out-of-fold predictions")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="plot-ready CSV (default: --out with .csv suffix)")
    _add_test_args(p)
    _add_booster_args(p, "learner-", "black-box learner")

    p = sub.add_parser("baselines", help="chi-squared, gain ratio and CFS scores")
    _add_data_args(p)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", help="JSON path (default stdout)")

    p = sub.add_parser("calibrate", help="rejection rate under an independent-candidate null")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", help="JSON path (default stdout)")
    _add_test_args(p)
    _add_booster_args(p, "learner-", "black-box learner")
    return parser


def _load_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - {"test", "regressor", "learner"}
    if unknown:
        raise FeatprobeError(f"config {path}: unknown sections {sorted(unknown)}")
    return cfg


def _usage_checked(parser, build, *a):
    try:
        return build(*a)
    except (TypeError, ValueError) as exc:
        parser.error(str(exc))


def _booster(args, prefix, base: dict) -> BoostParams:
    params = dict(base)
    attr = prefix.replace("-", "_")
    for flag, key in (("rounds", "n_rounds"), ("depth", "max_depth"),
                      ("learning_rate", "learning_rate"), ("min_leaf", "min_leaf")):
        value = getattr(args, attr + flag, None)
        if value is not None:
            params[key] = value
    return BoostParams(**params)


def _test_config(args, cfg) -> TestConfig:
    t = dict(cfg.get("test", {}))
    for flag, key in (("bootstrap", "n_bootstrap"), ("alpha", "alpha"), ("seed", "seed"),
                      ("resample", "candidate_resampling")):
        value = getattr(args, flag, None)
        if value is not None:
            t[key] = value
    return TestConfig(regressor=_booster(args, "", cfg.get("regressor", {})), **t)


def _schema(args, parser) -> Schema:
    base = Schema.from_json(args.schema) if args.schema else None
    types = dict(base.types) if base else {}
    for item in args.type:
        col, sep, kind = item.partition("=")
        if not sep:
            parser.error(f"--type expects COL=KIND, got {item!r}")
        types[col] = kind
    label = args.label or (base.label if base else None)
    if not label:
        parser.error("the following arguments are required: --label")
    candidates = tuple(getattr(args, "candidate", None) or ()) or (base.candidates if base else ())
    return Schema.from_dict({
        "label": label,
        "prediction": getattr(args, "prediction", None) or (base.prediction if base else None),
        "group": getattr(args, "group", None) or (base.group if base else None),
        "candidates": list(candidates),
        "types": types,
    })


def _cmd_test(args, parser, cfg) -> int:
    schema = _schema(args, parser)
    if schema.prediction is None:
        parser.error("the following arguments are required: --prediction")
    if not schema.candidates:
        parser.error("the following arguments are required: --candidate")
    if args.loss == "ndcg" and schema.group is None:
        parser.error("--loss ndcg requires --group")
    config = _usage_checked(parser, _test_config, args, cfg)
    ds = load_csv(args.data, schema, max_onehot=args.max_onehot)
    ds.check_task(args.loss)
    if ds.n_dropped:
        log.warning("dropped %d rows with missing values", ds.n_dropped)

    grad = gradient_vector(args.loss, ds.predictions, ds.y, ds.group_ids)
    names = tuple(c for name in ds.candidates for c in ds.resolve(name))
    result = relevance_test(ds.matrix(list(ds.candidates)), grad, config,
                            candidate_names=names, workers=resolve_workers(args.workers))
    if args.out:
        _write(args.out, dumps(result.to_dict()))
    print(f"candidate      {' + '.join(names)}")
    print(f"rows           {result.n}  (dropped {ds.n_dropped})")
    print(f"loss           {args.loss}  |mean grad|/std {gradient_mean_ratio(grad.raw):.4f}")
    print(f"statistic v    {result.statistic_v:.6g}")
    print(f"null mean/std  {result.null_mean:.6g} / {result.null_std:.6g}  (N={config.n_bootstrap})")
    print(f"utility score  {result.utility_score:.4f}")
    print(f"p-value        {result.p_value:.4f}  (smoothed {result.p_smoothed:.4f})")
    print(f"decision       {'useful' if result.reject else 'no evidence of utility'} at alpha={config.alpha}")
    return 0


def _cmd_ablate(args, parser, cfg) -> int:
    schema = _schema(args, parser)
    if args.loss == "ndcg" and schema.group is None:
        parser.error("--loss ndcg requires --group")
    config = _usage_checked(parser, _test_config, args, cfg)
    learner = _usage_checked(parser, _booster, args, "learner-", cfg.get("learner", {}))
    ds = load_csv(args.data, schema, max_onehot=args.max_onehot)
    records = ablate(
        ds, args.loss, learner=learner, test=config, features=args.feature,
        workers=resolve_workers(args.workers), train_gradients=args.train_gradients,
        fold_seed=config.seed, k=args.folds,
    )
    report = compare_report(records, dataset=Path(args.data).name, loss=args.loss,
                            threshold=args.threshold, alpha=config.alpha)
    report["learner_params"] = asdict(learner)
    report["test"] = {"n_bootstrap": config.n_bootstrap, "seed": config.seed,
                      "regressor_params": asdict(config.regressor), "folds": args.folds}
    _write(args.out, dumps(report))
    write_plot_csv(records, args.csv or Path(args.out).with_suffix(".csv"))
    print(format_table(records))
    s = report["recall_summary"]
    print(f"\n{s['n_predicted_useless']} feature(s) with p > {s['alpha']}; "
          f"{s['n_missed']} of them above {s['threshold_pct']}% actual utility")
    return 0


def _cmd_baselines(args, parser, cfg) -> int:
    schema = _schema(args, parser)
    ds = load_csv(args.data, schema, max_onehot=args.max_onehot)
    _write(args.out, dumps(score_features(ds, BinningSpec(n_bins=args.bins))))
    return 0


def _cmd_calibrate(args, parser, cfg) -> int:
    config = _usage_checked(parser, _test_config, args, cfg)
    learner = _usage_checked(parser, _booster, args, "learner-", cfg.get("learner", {}))
    summary = null_calibration(args.n, args.reps, config, seed=config.seed, learner=learner,
                               k=args.folds, workers=resolve_workers(args.workers))
    _write(args.out, dumps(asdict(summary)))
    if args.out:
        print(f"rejection rate {summary.rate:.3f} at alpha={summary.alpha} "
              f"(95% CI {summary.ci_low:.3f}-{summary.ci_high:.3f}, {summary.reps} reps)")
    return 0


COMMANDS = {"test": _cmd_test, "ablate": _cmd_ablate, "baselines": _cmd_baselines,
            "calibrate": _cmd_calibrate}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load_config(getattr(args, "config", None))
        return COMMANDS[args.command](args, parser, cfg)
    except (FeatprobeError, OSError, ValueError) as exc:  # JSONDecodeError is a ValueError
        print(f"featprobe: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
