"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line in the terminal summary."""
import csv
import json
import statistics
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from dcacal import LossKind, LossSpec, PredictionSet, composite_loss, ece, fit_temperature, mce, softmax
from dcacal import io
from dcacal.cli import main
from dcacal.harness import ExperimentConfig, cmd_sweep_beta, cmd_toy_experiment
from dcacal.metrics import nll
from dcacal.nn import backward, forward, init_mlp

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2, 3, 4]


# metric oracle ----------------------------------------------------------------

def oracle_ece_mce(probs, labels, m):
    """Nested loop over bins and samples in plain Python floats."""
    rows = [list(map(float, r)) for r in probs]
    n = len(rows)
    e = w = 0.0
    for b in range(m):
        lo, hi = b / m, (b + 1) / m
        cnt, hits, csum = 0, 0, 0.0
        for i in range(n):
            c = max(rows[i])
            if lo < c <= hi or (b == 0 and c <= lo):
                cnt += 1
                csum += c
                if rows[i].index(c) == labels[i]:
                    hits += 1
        if cnt:
            gap = abs(hits / cnt - csum / cnt)
            e += cnt / n * gap
            w = max(w, gap)
    return e, w


def random_prediction_set(rng):
    n, k = int(rng.integers(1, 501)), int(rng.integers(2, 9))
    mode = rng.integers(3)
    if mode == 0:
        probs = rng.dirichlet(np.full(k, rng.uniform(0.1, 3)), size=n)
    elif mode == 1:
        probs = softmax(rng.normal(scale=rng.uniform(0.5, 8), size=(n, k)))
    else:
        # confidences sitting exactly on bin edges
        top = rng.choice(np.arange(1, 16) / 15.0, size=n)
        top = np.maximum(top, 1.0 / k)
        rest = (1 - top)[:, None] * rng.dirichlet(np.ones(k - 1), size=n)
        rest = np.minimum(rest, top[:, None])
        rest *= ((1 - top) / np.where(rest.sum(1) > 0, rest.sum(1), 1))[:, None]
        probs = np.concatenate([top[:, None], rest], axis=1)
        for i in range(n):
            probs[i] = np.roll(probs[i], rng.integers(k))
    return probs, rng.integers(0, k, n)


def test_metric_oracle_equivalence(acceptance):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for i in range(200):
        probs, labels = random_prediction_set(rng)
        m = (1, 5, 10, 15)[i % 4]
        ps = PredictionSet(probs, labels)
        e, w = oracle_ece_mce(probs, labels, m)
        worst = max(worst, abs(ece(ps, m) - e), abs(mce(ps, m) - w))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    acceptance("metric oracle equivalence", ok, f"max |diff| = {worst:.2e} (tol 1e-12), {elapsed:.1f}s (< 10s)")
    assert ok


# gradient suite ---------------------------------------------------------------

def random_spec(kind, rng):
    if kind is LossKind.LABEL_SMOOTHING:
        return LossSpec(kind, alpha=float(rng.uniform(0.05, 0.5)))
    if kind is LossKind.CROSS_ENTROPY:
        return LossSpec(kind)
    return LossSpec(kind, beta=float(rng.uniform(0.1, 15)))


def tiny_model(rng, seed):
    while True:
        d, k = int(rng.integers(1, 4)), int(rng.integers(2, 5))
        hidden = [int(h) for h in rng.integers(2, 9, size=rng.integers(0, 3))]
        sizes = [d] + hidden + [k]
        model = init_mlp(sizes, seed=seed)
        if model.n_parameters() <= 100:
            return model


def gradient_rel_error(model, x, y, spec, eps=1e-6):
    _, grads = backward(model, x, y, spec)
    analytic = np.concatenate([g.ravel() for pair in grads for g in pair])
    numeric = []
    for p in model.parameters():
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            fp = composite_loss(spec, forward(model, x), y).total
            p[i] = old - eps
            fm = composite_loss(spec, forward(model, x), y).total
            p[i] = old
            numeric.append((fp - fm) / (2 * eps))
    numeric = np.array(numeric)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def test_gradient_suite(acceptance):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = {}
    for kind in LossKind:
        errs = []
        for inst in range(50):
            model = tiny_model(rng, seed=inst)
            n = int(rng.integers(2, 17))
            x = rng.normal(size=(n, model.input_dim))
            y = rng.integers(0, model.class_count, n)
            errs.append(gradient_rel_error(model, x, y, random_spec(kind, rng)))
        worst[kind.value] = max(errs)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-5 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    acceptance("gradient suite", ok, f"worst relative error per kind: {detail} (tol 1e-5), {elapsed:.1f}s (< 60s)")
    assert ok


# synthetic-task runs ----------------------------------------------------------

@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    cfg = ExperimentConfig(seeds=SEEDS, out=str(out))
    start = time.perf_counter()
    summary = cmd_toy_experiment(cfg, grid_points=81)
    return out, summary, time.perf_counter() - start


def test_dca_beats_uncalibrated_ece(toy_run, acceptance):
    out, s, elapsed = toy_run
    unc = [r["ece"]["uncalibrated"] for r in s["seeds"]]
    dca = [r["ece"]["dca"] for r in s["seeds"]]
    acc_gap = statistics.median(r["accuracy"]["dca"] for r in s["seeds"]) - \
        statistics.median(r["accuracy"]["uncalibrated"] for r in s["seeds"])
    ok = statistics.median(dca) < statistics.median(unc) and abs(acc_gap) <= 0.03 and elapsed < 300
    acceptance("DCA vs uncalibrated ECE", ok,
               f"median ECE {statistics.median(unc):.4f} -> {statistics.median(dca):.4f}, "
               f"median accuracy diff {acc_gap:+.4f} (|.| <= 0.03), {elapsed:.0f}s (< 300s); "
               f"per-seed unc {[round(v, 4) for v in unc]} dca {[round(v, 4) for v in dca]}")
    assert ok


def test_temperature_properties(toy_run, acceptance):
    out, s, _ = toy_run
    problems = []
    for seed in SEEDS:
        rep = json.loads((out / f"seed_{seed}" / "uncalibrated" / "report.json").read_text())
        t = rep["temperature"]
        if not t["fit_nll"] <= t["nll_at_1"]:
            problems.append(f"seed {seed}: NLL(T) {t['fit_nll']} > NLL(1) {t['nll_at_1']}")
        if rep["temperature_report"]["accuracy"] != rep["report"]["accuracy"]:
            problems.append(f"seed {seed}: accuracy changed under T")
    rng = np.random.default_rng(31)
    z = rng.normal(scale=2.0, size=(5000, 4))
    y = np.array([rng.choice(4, p=row) for row in softmax(z)])
    t3 = fit_temperature(3.0 * z, y).t
    if not 2.85 <= t3 <= 3.15:
        problems.append(f"sharpened logits gave T={t3:.4f}")
    temps = [round(r["temperature"], 3) for r in s["seeds"]]
    ok = not problems
    acceptance("temperature scaling properties", ok,
               f"NLL(T) <= NLL(1) and equal accuracy on {len(SEEDS)} runs (T = {temps}); "
               f"3x-sharpened T = {t3:.4f} in [2.85, 3.15]" + ("; " + "; ".join(problems) if problems else ""))
    assert ok


def test_toy_curve_recovery(toy_run, acceptance):
    out, s, elapsed = toy_run
    unc = statistics.median(r["scores"]["uncalibrated"] for r in s["seeds"])
    dca = statistics.median(r["scores"]["dca"] for r in s["seeds"])
    not_contracting = []
    for seed in SEEDS:
        with (out / f"seed_{seed}" / "curves.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        pu = [float(r["predicted"]) for r in rows if r["method"] == "uncalibrated"]
        pt = [float(r["predicted"]) for r in rows if r["method"] == "temperature"]
        bad = sum(not (abs(b - 0.5) <= abs(a - 0.5) and (a - 0.5) * (b - 0.5) >= 0) for a, b in zip(pu, pt))
        if bad:
            not_contracting.append(f"seed {seed}: {bad}/{len(pu)} points")
    ok = dca < unc and not not_contracting and elapsed < 180
    acceptance("toy curve recovery", ok,
               f"median curve MAD unc {unc:.4f} vs dca {dca:.4f}; contraction toward 0.5 "
               + ("holds at every grid point on every seed" if not not_contracting
                  else "fails on " + ", ".join(not_contracting))
               + f"; {elapsed:.0f}s (< 180s)")
    assert ok


def test_beta_sweep_shape(tmp_path, acceptance):
    cfg = ExperimentConfig(seeds=SEEDS, out=str(tmp_path / "sweep"))
    start = time.perf_counter()
    s = cmd_sweep_beta(cfg)
    elapsed = time.perf_counter() - start
    med = {row["beta"]: row["median_ece"] for row in s["table"]}
    ok = med[10.0] <= med[1.0] and elapsed < 900
    acceptance("beta sweep shape", ok,
               "median ECE " + ", ".join(f"b={b:g}: {v:.4f}" for b, v in med.items())
               + f"; need b=10 <= b=1; {elapsed:.0f}s (< 900s)")
    assert ok


# determinism ------------------------------------------------------------------

SMALL_CONFIG = """\
dataset: {n_train: 80, n_test: 200}
train: {epochs: 4, batch_size: 16}
seeds: [0, 1]
"""


def _artifacts(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.suffix in (".csv", ".json")}


def test_determinism(tmp_path, acceptance):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(SMALL_CONFIG)
    rng = np.random.default_rng(5)
    io.write_prediction_log(tmp_path / "val.jsonl", 2 * rng.normal(size=(100, 3)), rng.integers(0, 3, 100))
    io.write_prediction_log(tmp_path / "test.jsonl", 2 * rng.normal(size=(100, 3)), rng.integers(0, 3, 100))
    commands = {
        "train": ["train", "--config", str(cfg)],
        "toy-experiment": ["toy-experiment", "--config", str(cfg), "--grid-points", "21"],
        "sweep-beta": ["sweep-beta", "--config", str(cfg), "--betas", "1,10"],
        "compare": ["compare", "--config", str(cfg), "--methods", "uncalibrated,temperature,dca,mmce"],
        "evaluate": ["evaluate", "--predictions", str(tmp_path / "test.jsonl")],
        "calibrate": ["calibrate", "--fit", str(tmp_path / "val.jsonl"), "--apply", str(tmp_path / "test.jsonl")],
    }
    runner = CliRunner()
    differing = []
    for name, args in commands.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / name / rep
            res = runner.invoke(main, args + ["--out", str(out)], catch_exceptions=False)
            assert res.exit_code == 0, res.output
            outs.append(_artifacts(out))
        if outs[0] != outs[1] or not outs[0]:
            differing.append(name)
    # evaluate on a checkpoint + dataset written by train
    ck = tmp_path / "train" / "a"
    for rep in ("a", "b"):
        runner.invoke(main, ["evaluate", "--checkpoint", str(ck / "seed_0" / "checkpoint.json"),
                             "--dataset", str(ck / "data" / "seed_0" / "test.csv"), "--use-temperature",
                             "--out", str(tmp_path / "ev_ck" / rep)], catch_exceptions=False)
    if _artifacts(tmp_path / "ev_ck" / "a") != _artifacts(tmp_path / "ev_ck" / "b"):
        differing.append("evaluate --checkpoint")
    ok = not differing
    acceptance("determinism", ok, f"{len(commands) + 1} command reruns compared byte-for-byte"
               + (f"; differing: {differing}" if differing else ", all CSV/JSON identical"))
    assert ok
