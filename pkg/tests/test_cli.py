import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from dcacal import io
from dcacal.cli import main
from dcacal.harness import DEFAULT_BETAS, config_from_dict, relative_reduction
from dcacal.errors import InvalidInput

SMALL = {
    "dataset": {"n_train": 60, "n_test": 100},
    "train": {"epochs": 3, "batch_size": 16},
    "seeds": [0, 1],
}


def write_config(tmp_path, extra=None, name="cfg.yaml"):
    cfg = json.loads(json.dumps(SMALL))
    for k, v in (extra or {}).items():
        if isinstance(v, dict):
            cfg.setdefault(k, {}).update(v)
        else:
            cfg[k] = v
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def run(args):
    res = CliRunner().invoke(main, args, catch_exceptions=False)
    assert res.exit_code == 0, res.output
    return res.output


def files_bytes(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.suffix in (".csv", ".json")}


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(InvalidInput, match="unknown"):
        config_from_dict({"epochs": 3})
    with pytest.raises(InvalidInput, match="train"):
        config_from_dict({"train": {"epoch": 3}})
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  learning_rat: 0.1\n")
    res = CliRunner().invoke(main, ["train", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert res.exit_code != 0
    assert "learning_rat" in res.output
    assert not (tmp_path / "o").exists()


def test_train_fans_out_per_seed(tmp_path):
    out = tmp_path / "run"
    run(["train", "--config", write_config(tmp_path), "--out", str(out)])
    for s in (0, 1):
        d = out / f"seed_{s}"
        assert (d / "checkpoint.json").exists()
        rows = io.read_trace_csv(d / "trace.csv")
        assert [r.epoch for r in rows] == [1, 2, 3]
        rep = json.loads((d / "report.json").read_text())
        assert rep["bins"] == 10
        assert rep["temperature"]["fit_nll"] <= rep["temperature"]["nll_at_1"]
    summary = json.loads((out / "summary.json").read_text())
    assert [r["seed"] for r in summary["runs"]] == [0, 1]


def test_train_is_byte_deterministic(tmp_path):
    cfg = write_config(tmp_path, {"loss": {"kind": "dca", "beta": 10.0}})
    run(["train", "--config", cfg, "--out", str(tmp_path / "a")])
    run(["train", "--config", cfg, "--out", str(tmp_path / "b")])
    a, b = files_bytes(tmp_path / "a"), files_bytes(tmp_path / "b")
    assert a.keys() == b.keys() and a == b


def test_report_reproducible_from_checkpoint(tmp_path):
    out = tmp_path / "run"
    run(["train", "--config", write_config(tmp_path), "--seed", "3", "--out", str(out)])
    rep = json.loads((out / "seed_3" / "report.json").read_text())
    ev = tmp_path / "ev"
    run(["evaluate", "--checkpoint", str(out / "seed_3" / "checkpoint.json"),
         "--dataset", str(out / "data" / "seed_3" / "test.csv"), "--out", str(ev)])
    assert json.loads((ev / "report.json").read_text())["report"] == rep["report"]
    ev_t = tmp_path / "ev_t"
    run(["evaluate", "--checkpoint", str(out / "seed_3" / "checkpoint.json"), "--use-temperature",
         "--dataset", str(out / "data" / "seed_3" / "test.csv"), "--out", str(ev_t)])
    assert json.loads((ev_t / "report.json").read_text())["report"] == rep["temperature_report"]


def _ten_sample_log(path):
    conf = [0.81, 0.82, 0.83, 0.84, 0.85, 0.85, 0.86, 0.87, 0.88, 0.89]
    logits = [[math.log(c), math.log(1 - c)] for c in conf]
    io.write_prediction_log(path, logits, [0] * 7 + [1] * 3)


def test_evaluate_ten_sample_log(tmp_path):
    _ten_sample_log(tmp_path / "p.jsonl")
    run(["evaluate", "--predictions", str(tmp_path / "p.jsonl"), "--out", str(tmp_path / "ev")])
    rep = json.loads((tmp_path / "ev" / "report.json").read_text())["report"]
    assert rep["ece"] == pytest.approx(0.15, abs=1e-12)
    rows = io.read_reliability_csv(tmp_path / "ev" / "reliability.csv")
    assert sum(r.count / 10 * abs(r.accuracy - r.mean_confidence) for r in rows) == rep["ece"]
    assert (tmp_path / "ev" / "reliability.svg").read_text().startswith("<svg")


def test_evaluate_perfect_log(tmp_path):
    io.write_prediction_log(tmp_path / "p.jsonl", [[800.0, 0.0], [0.0, 800.0]], [0, 1])
    run(["evaluate", "--predictions", str(tmp_path / "p.jsonl"), "--out", str(tmp_path / "ev")])
    rep = json.loads((tmp_path / "ev" / "report.json").read_text())["report"]
    assert (rep["ece"], rep["mce"], rep["accuracy"]) == (0.0, 0.0, 1.0)


def test_evaluate_bad_log_reports_line(tmp_path):
    p = tmp_path / "p.jsonl"
    p.write_text('{"logits": [0, 1], "label": 0}\n{"logits": [0, 1, 3], "label": 0}\n')
    res = CliRunner().invoke(main, ["evaluate", "--predictions", str(p), "--out", str(tmp_path / "ev")])
    assert res.exit_code != 0
    assert "p.jsonl:2:" in res.output


def test_calibrate_writes_temperature(tmp_path, rng):
    z = 3 * rng.normal(size=(400, 3))
    y = np.array([rng.choice(3, p=np.exp(r / 3) / np.exp(r / 3).sum()) for r in z])
    io.write_prediction_log(tmp_path / "fit.jsonl", z, y)
    run(["calibrate", "--fit", str(tmp_path / "fit.jsonl"), "--out", str(tmp_path / "cal")])
    t = json.loads((tmp_path / "cal" / "temperature.json").read_text())
    assert float.fromhex(t["t_hex"]) == t["t"]
    assert 2.0 < t["t"] < 4.5
    rep = json.loads((tmp_path / "cal" / "report.json").read_text())
    assert rep["report"]["accuracy"] == rep["uncalibrated"]["accuracy"]


def test_toy_experiment_outputs(tmp_path):
    out = tmp_path / "toy"
    run(["toy-experiment", "--config", write_config(tmp_path), "--grid-points", "9", "--out", str(out)])
    s = json.loads((out / "toy_summary.json").read_text())
    assert set(s["median_score"]) == {"uncalibrated", "temperature", "dca"}
    rows = (out / "seed_0" / "curves.csv").read_text().splitlines()
    assert rows[0] == "method,x,predicted,true"
    assert {r.split(",")[0] for r in rows[1:]} == {"uncalibrated", "temperature", "dca"}
    assert len(rows) == 1 + 3 * 9


def test_sweep_rows_and_zero_beta(tmp_path):
    out = tmp_path / "sweep"
    run(["sweep-beta", "--config", write_config(tmp_path), "--betas", "0,10", "--out", str(out)])
    s = json.loads((out / "sweep.json").read_text())
    assert len(s["rows"]) == 2 * 2
    run(["train", "--config", write_config(tmp_path, {"loss": {"kind": "ce"}}), "--out", str(tmp_path / "ce")])
    for seed in (0, 1):
        ce = json.loads((tmp_path / "ce" / f"seed_{seed}" / "report.json").read_text())["report"]
        row = next(r for r in s["rows"] if r["beta"] == 0 and r["seed"] == seed)
        assert (row["ece"], row["accuracy"]) == (ce["ece"], ce["accuracy"])


def test_default_betas():
    assert DEFAULT_BETAS == (1.0, 5.0, 10.0, 15.0, 20.0, 25.0)


def test_compare_table(tmp_path):
    out = tmp_path / "cmp"
    run(["compare", "--config", write_config(tmp_path), "--methods",
         "uncalibrated;temperature;dca:beta=10;dca:beta=10", "--out", str(out)])
    r = json.loads((out / "compare.json").read_text())
    unc, temp, d1, d2 = r["columns"]
    assert d1["per_seed"] == d2["per_seed"]
    assert [c["accuracy"] for c in unc["per_seed"]] == [c["accuracy"] for c in temp["per_seed"]]
    for c in d1["per_seed"]:
        assert (out / c["trace"]).exists()
    assert "ECE reduction" in (out / "compare.md").read_text()


def test_relative_reduction_example():
    assert relative_reduction(0.10, 0.034) == pytest.approx(0.66, abs=1e-12)
    assert round(100 * relative_reduction(0.1006, 0.0345), 2) == 65.71
