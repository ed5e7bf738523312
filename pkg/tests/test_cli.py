import json

import numpy as np
import pytest

from featprobe.cli import run
from featprobe.dataset import housing_path


@pytest.fixture
def regression_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 300
    x1, x9 = rng.normal(size=n), rng.normal(size=n)
    y = x1 + 0.8 * x9 + rng.normal(size=n) * 0.5
    f0 = x1
    path = tmp_path / "d.csv"
    table = np.column_stack([x1, x9, f0, y]).tolist()
    lines = ["x1,x9,f0,y"] + [",".join(map(repr, row)) for row in table]
    path.write_text("\n".join(lines) + "\n")
    return path


def _test_argv(data, out, *extra):
    return ["test", "--data", str(data), "--label", "y", "--prediction", "f0", "--candidate", "x9",
            "--loss", "squared", "--bootstrap", "30", "--seed", "42", "--out", str(out), *extra]


def test_test_command_writes_result(regression_csv, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(_test_argv(regression_csv, out)) == 0
    doc = json.loads(out.read_text())
    assert doc["candidate"] == ["x9"] and doc["n"] == 300
    assert doc["p_value"] == 0.0 and doc["utility_score"] > 2
    assert doc["seed"] == 42 and doc["n_bootstrap"] == 30
    assert "p-value" in capsys.readouterr().out


def test_identical_argv_gives_identical_bytes(regression_csv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(_test_argv(regression_csv, a))
    run(_test_argv(regression_csv, b))
    assert a.read_bytes() == b.read_bytes()


def test_block_candidate_may_recycle_a_model_feature(regression_csv, tmp_path):
    out = tmp_path / "r.json"
    assert run(_test_argv(regression_csv, out, "--candidate", "x1")) == 0
    assert json.loads(out.read_text())["candidate"] == ["x9", "x1"]


def test_ranking_without_group_is_usage_error(regression_csv, tmp_path, capsys):
    argv = _test_argv(regression_csv, tmp_path / "r.json")
    argv[argv.index("squared")] = "ndcg"
    with pytest.raises(SystemExit) as exc:
        run(argv)
    assert exc.value.code == 2
    assert "--group" in capsys.readouterr().err


@pytest.mark.parametrize("extra", [["--bootstrap", "0"], ["--alpha", "1.5"], ["--bogus"]])
def test_bad_flags_are_usage_errors(regression_csv, tmp_path, extra):
    with pytest.raises(SystemExit) as exc:
        run(_test_argv(regression_csv, tmp_path / "r.json", *extra))
    assert exc.value.code == 2


def test_data_errors_exit_one(regression_csv, tmp_path, capsys):
    assert run(_test_argv(tmp_path / "missing.csv", tmp_path / "r.json")) == 1
    argv = _test_argv(regression_csv, tmp_path / "r.json")
    argv[argv.index("x9")] = "nope"
    assert run(argv) == 1
    assert "'nope'" in capsys.readouterr().err


def test_ablate_housing(tmp_path):
    out = tmp_path / "rep.json"
    argv = ["ablate", "--data", str(housing_path()), "--label", "medv", "--loss", "squared",
            "--folds", "10", "--seed", "7", "--bootstrap", "20", "--out", str(out)]
    assert run(argv) == 0
    report = json.loads(out.read_text())
    assert len(report["records"]) == 13
    assert report["recall_summary"]["n_features"] == 13
    rows = out.with_suffix(".csv").read_text().splitlines()
    assert len(rows) == 14


def test_baselines_command(regression_csv, tmp_path):
    out = tmp_path / "b.json"
    assert run(["baselines", "--data", str(regression_csv), "--label", "y", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert {d["method"] for d in doc} == {"chi2", "gain_ratio", "cfs"}
    assert {d["feature"] for d in doc} == {"x1", "x9", "f0"}


def test_calibrate_command(tmp_path):
    out = tmp_path / "c.json"
    argv = ["calibrate", "--n", "100", "--reps", "50", "--bootstrap", "5", "--alpha", "0.5",
            "--out", str(out)]
    assert run(argv) == 0
    doc = json.loads(out.read_text())
    assert doc["reps"] == 50 and 0 <= doc["ci_low"] <= doc["rate"] <= doc["ci_high"] <= 1
