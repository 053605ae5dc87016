"""Experiment orchestration behind the CLI: per-seed runs, toy curves, beta sweeps, comparisons.

Every run derives its data, split, initialisation and shuffling streams from the
run seed, so two methods under the same seed see identical data and start
from identical weights.
"""
from __future__ import annotations

import logging
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import data as datamod
from . import io
from .errors import InvalidInput
from .losses import LossKind, LossSpec
from .metrics import CalibrationReport, calibration_report, nll
from .nn import TrainConfig, forward, init_mlp, train
from .posthoc import TemperatureScaler, fit_temperature
from .probs import PredictionSet, softmax

log = logging.getLogger(__name__)

DEFAULT_BETAS = (1.0, 5.0, 10.0, 15.0, 20.0, 25.0)
DEFAULT_DCA_BETA = 10.0
METHOD_DEFAULTS = {
    "uncalibrated": {},
    "temperature": {},
    "dca": {"beta": DEFAULT_DCA_BETA},
    "entropy": {"beta": 0.1},
    "label_smoothing": {"alpha": 0.1},
    "mmce": {"beta": 1.0},
}


@dataclass
class DatasetSpec:
    kind: str = "toy1d"
    n_train: int = 200
    n_test: int = 2000
    curve: dict = field(default_factory=lambda: {"kind": "logistic", "scale": 2.0})
    k: int = 3
    separation: float = 3.0
    dim: int = 2

    def __post_init__(self):
        if self.kind not in ("toy1d", "blobs"):
            raise InvalidInput(f"dataset.kind must be 'toy1d' or 'blobs', got {self.kind!r}")
        if self.n_train < 2 or self.n_test < 1:
            raise InvalidInput("dataset needs n_train >= 2 and n_test >= 1")
        datamod.GroundTruthCurve.from_dict(self.curve)

    def generate(self, n: int, seed: int) -> datamod.Dataset:
        if self.kind == "toy1d":
            return datamod.gen_toy1d(n, seed, datamod.GroundTruthCurve.from_dict(self.curve))
        return datamod.gen_blobs(self.k, max(n // self.k, 1), self.separation, self.dim, seed)


@dataclass
class ModelSpec:
    hidden: list = field(default_factory=lambda: [16])

    def __post_init__(self):
        if any(int(h) < 1 for h in self.hidden):
            raise InvalidInput("hidden widths must be positive")


@dataclass
class TrainSpec:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.01
    shuffle: bool = True

    def __post_init__(self):
        TrainConfig(self.epochs, self.batch_size, self.learning_rate)


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    loss: LossSpec = field(default_factory=lambda: LossSpec(LossKind.DCA, beta=DEFAULT_DCA_BETA))
    bins: int = 10
    fit_temperature: bool = True
    temperature_objective: str = "nll"
    val_fraction: float = 0.2
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise InvalidInput("seed list must be non-empty")
        if int(self.bins) < 1:
            raise InvalidInput("bins must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise InvalidInput("val_fraction must lie in (0, 1)")
        if self.temperature_objective not in ("nll", "ece"):
            raise InvalidInput("temperature_objective must be 'nll' or 'ece'")

    def to_dict(self) -> dict:
        """Serialisable form; the output directory is left out so reports do not depend on location."""
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        del d["out"]
        return d


_SECTIONS = {"dataset": DatasetSpec, "model": ModelSpec, "train": TrainSpec, "loss": LossSpec}


def _check_keys(section: str, given: dict, cls):
    allowed = {f.name for f in fields(cls)}
    unknown = set(given) - allowed
    if unknown:
        raise InvalidInput(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    _check_keys("config", raw, ExperimentConfig)
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise InvalidInput(f"config section {key!r} must be a mapping")
            _check_keys(key, value, _SECTIONS[key])
            try:
                kwargs[key] = _SECTIONS[key](**value)
            except TypeError as exc:
                raise InvalidInput(f"bad {key} section: {exc}") from None
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise InvalidInput(f"{path}: cannot read config: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise InvalidInput(f"{path}: config must be a mapping")
    return config_from_dict(raw)


def derive_seed(seed: int, stream: int) -> int:
    """Independent 32-bit stream seed for (run seed, stream id)."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


STREAM_TRAIN_DATA, STREAM_TEST_DATA, STREAM_SPLIT, STREAM_INIT, STREAM_SHUFFLE = range(1, 6)


@dataclass
class SeedData:
    train: datamod.Dataset
    val: datamod.Dataset
    test: datamod.Dataset


def make_seed_data(config: ExperimentConfig, seed: int) -> SeedData:
    full = config.dataset.generate(config.dataset.n_train, derive_seed(seed, STREAM_TRAIN_DATA))
    test = config.dataset.generate(config.dataset.n_test, derive_seed(seed, STREAM_TEST_DATA))
    fit, val = datamod.split(full, config.val_fraction, derive_seed(seed, STREAM_SPLIT))
    return SeedData(fit, val, test)


def write_seed_data(sd: SeedData, directory: Path) -> None:
    for name in ("train", "val", "test"):
        datamod.save_csv(getattr(sd, name), _mkdir(directory) / f"{name}.csv")


def _mkdir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


@dataclass
class RunResult:
    seed: int
    loss: LossSpec
    model: object
    trace: object
    report: CalibrationReport
    scaler: TemperatureScaler | None
    temperature_report: CalibrationReport | None
    directory: Path
    summary: dict


def _temperature_block(scaler: TemperatureScaler, val: datamod.Dataset, model) -> dict:
    z = forward(model, val.inputs)
    return {
        "t": scaler.t,
        "objective": scaler.objective,
        "fit_nll": scaler.fit_nll,
        "nll_at_1": nll(PredictionSet(softmax(z), val.labels)),
        "n_val": int(val.n),
    }


def run_seed(config: ExperimentConfig, seed: int, loss: LossSpec, run_dir, data_dir=None,
             sd: SeedData | None = None, fit_temp: bool | None = None) -> RunResult:
    """Train one model under ``loss`` for ``seed`` and write its checkpoint, trace and reports."""
    run_dir = _mkdir(run_dir)
    sd = sd or make_seed_data(config, seed)
    sizes = [sd.train.dim] + [int(h) for h in config.model.hidden] + [sd.train.k]
    model0 = init_mlp(sizes, derive_seed(seed, STREAM_INIT))
    tc = TrainConfig(
        epochs=config.train.epochs,
        batch_size=config.train.batch_size,
        learning_rate=config.train.learning_rate,
        seed=derive_seed(seed, STREAM_SHUFFLE),
        loss=loss,
        shuffle=config.train.shuffle,
    )
    model, trace = train(model0, sd.train, sd.test, tc, m_bins=config.bins)
    report = trace.final_report

    do_temp = config.fit_temperature if fit_temp is None else fit_temp
    scaler = temp_report = None
    if do_temp:
        scaler = fit_temperature(forward(model, sd.val.inputs), sd.val.labels,
                                 objective=config.temperature_objective, m_bins=config.bins)
        temp_report = calibration_report(scaler.predictions(forward(model, sd.test.inputs), sd.test.labels),
                                         config.bins)

    io.save_checkpoint(run_dir / "checkpoint.json", model, tc.to_dict(), None if scaler is None else scaler.t)
    io.write_trace_csv(run_dir / "trace.csv", trace)
    io.write_reliability_csv(run_dir / "reliability.csv", report)
    (run_dir / "reliability.svg").write_text(io.reliability_svg(report, f"{loss.kind.value} seed {seed}"))
    summary = {
        "seed": int(seed),
        "loss": loss.to_dict(),
        "bins": int(config.bins),
        "n_train": int(sd.train.n),
        "n_val": int(sd.val.n),
        "n_test": int(sd.test.n),
        "val_fraction": float(config.val_fraction),
        "degenerate_batches": int(trace.degenerate_batches),
        "checkpoint": "checkpoint.json",
        "trace": "trace.csv",
        "reliability": "reliability.csv",
        "report": report.to_dict(),
        "temperature": None,
        "temperature_report": None,
    }
    if data_dir is not None:
        summary["data"] = Path(data_dir).as_posix()
    if scaler is not None:
        summary["temperature"] = _temperature_block(scaler, sd.val, model)
        summary["temperature_report"] = temp_report.to_dict()
        io.write_reliability_csv(run_dir / "reliability_temperature.csv", temp_report)
    io.write_json(run_dir / "report.json", summary)
    return RunResult(seed, loss, model, trace, report, scaler, temp_report, run_dir, summary)


def _seed_data_cached(config, seed, out, cache):
    if seed not in cache:
        sd = make_seed_data(config, seed)
        write_seed_data(sd, Path(out) / "data" / f"seed_{seed}")
        cache[seed] = sd
    return cache[seed]


def cmd_train(config: ExperimentConfig) -> list[RunResult]:
    out = _mkdir(config.out)
    results, cache = [], {}
    for seed in config.seeds:
        sd = _seed_data_cached(config, seed, out, cache)
        results.append(run_seed(config, seed, config.loss, out / f"seed_{seed}",
                                data_dir=f"data/seed_{seed}", sd=sd))
    io.write_json(out / "summary.json", {
        "config": config.to_dict(),
        "runs": [{"seed": r.seed, "dir": f"seed_{r.seed}", "ece": r.report.ece, "mce": r.report.mce,
                  "accuracy": r.report.accuracy, "nll": r.report.nll} for r in results],
    })
    return results


def _median(values) -> float:
    return float(statistics.median(values))


def cmd_toy_experiment(config: ExperimentConfig, grid_points: int = 81) -> dict:
    """Uncalibrated, temperature-scaled and DCA probability-recovery curves per seed."""
    if config.dataset.kind != "toy1d":
        raise InvalidInput("toy-experiment needs a toy1d dataset")
    out = _mkdir(config.out)
    curve = datamod.GroundTruthCurve.from_dict(config.dataset.curve)
    grid = datamod.default_grid(grid_points)
    dca_loss = config.loss if config.loss.kind is LossKind.DCA else LossSpec(LossKind.DCA, beta=DEFAULT_DCA_BETA)
    cache, per_seed = {}, []
    for seed in config.seeds:
        sd = _seed_data_cached(config, seed, out, cache)
        base = out / f"seed_{seed}"
        unc = run_seed(config, seed, LossSpec(), base / "uncalibrated", f"data/seed_{seed}", sd, fit_temp=True)
        dca_run = run_seed(config, seed, dca_loss, base / "dca", f"data/seed_{seed}", sd, fit_temp=False)
        t = unc.scaler.t
        curves = {
            "uncalibrated": datamod.recover_curve(unc.model, None, grid, curve),
            "temperature": datamod.recover_curve(unc.model, t, grid, curve),
            "dca": datamod.recover_curve(dca_run.model, None, grid, curve),
        }
        rows = [(name, x, p, q) for name, pts in curves.items() for x, p, q in pts]
        io.write_rows_csv(base / "curves.csv", ["method", "x", "predicted", "true"], rows)
        (base / "curves.svg").write_text(io.curves_svg(curves))
        contraction = all(
            abs(pt - 0.5) <= abs(pu - 0.5) and (pt - 0.5) * (pu - 0.5) >= 0
            for (_, pu, _), (_, pt, _) in zip(curves["uncalibrated"], curves["temperature"])
        )
        per_seed.append({
            "seed": int(seed),
            "temperature": t,
            "scores": {name: datamod.curve_score(pts) for name, pts in curves.items()},
            "ece": {"uncalibrated": unc.report.ece, "temperature": unc.temperature_report.ece,
                    "dca": dca_run.report.ece},
            "accuracy": {"uncalibrated": unc.report.accuracy, "temperature": unc.temperature_report.accuracy,
                         "dca": dca_run.report.accuracy},
            "temperature_contracts": contraction,
            "curves": f"seed_{seed}/curves.csv",
        })
    methods = ("uncalibrated", "temperature", "dca")
    summary = {
        "config": config.to_dict(),
        "grid_points": int(grid_points),
        "seeds": per_seed,
        "median_score": {m: _median([s["scores"][m] for s in per_seed]) for m in methods},
        "median_ece": {m: _median([s["ece"][m] for s in per_seed]) for m in methods},
        "median_accuracy": {m: _median([s["accuracy"][m] for s in per_seed]) for m in methods},
    }
    io.write_json(out / "toy_summary.json", summary)
    return summary


def cmd_sweep_beta(config: ExperimentConfig, betas=DEFAULT_BETAS) -> dict:
    betas = [float(b) for b in betas]
    if not betas or any(b < 0 for b in betas):
        raise InvalidInput("betas must be a non-empty list of values >= 0")
    out = _mkdir(config.out)
    cache, rows = {}, []
    for beta in betas:
        loss = LossSpec(LossKind.DCA, beta=beta, kernel_width=config.loss.kernel_width)
        for seed in config.seeds:
            sd = _seed_data_cached(config, seed, out, cache)
            r = run_seed(config, seed, loss, out / f"beta_{beta:g}" / f"seed_{seed}",
                         f"data/seed_{seed}", sd, fit_temp=False)
            rows.append((beta, int(seed), r.report.ece, r.report.mce, r.report.accuracy, r.report.nll,
                         f"beta_{beta:g}/seed_{seed}/trace.csv"))
    io.write_rows_csv(out / "sweep.csv", ["beta", "seed", "ece", "mce", "accuracy", "nll", "trace"], rows)
    table = [
        {
            "beta": beta,
            "median_ece": _median([r[2] for r in rows if r[0] == beta]),
            "median_accuracy": _median([r[4] for r in rows if r[0] == beta]),
        }
        for beta in betas
    ]
    summary = {"config": config.to_dict(), "betas": betas, "table": table,
               "rows": [dict(zip(("beta", "seed", "ece", "mce", "accuracy", "nll", "trace"), r)) for r in rows]}
    io.write_json(out / "sweep.json", summary)
    return summary


def parse_method(text: str) -> tuple[str, dict]:
    """``name`` or ``name:key=value,key=value`` -> (name, params)."""
    name, _, rest = text.strip().partition(":")
    name = name.strip()
    if name not in METHOD_DEFAULTS:
        raise InvalidInput(f"unknown method {name!r}; choose from {', '.join(METHOD_DEFAULTS)}")
    params = dict(METHOD_DEFAULTS[name])
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq or key not in ("beta", "alpha", "kernel_width"):
            raise InvalidInput(f"bad method parameter {item!r} in {text!r}")
        params[key] = float(value)
    return name, params


def _method_loss(name: str, params: dict) -> LossSpec:
    kind = {
        "uncalibrated": LossKind.CROSS_ENTROPY,
        "temperature": LossKind.CROSS_ENTROPY,
        "dca": LossKind.DCA,
        "entropy": LossKind.ENTROPY_PENALTY,
        "label_smoothing": LossKind.LABEL_SMOOTHING,
        "mmce": LossKind.MMCE,
    }[name]
    return LossSpec(kind, **params)


def relative_reduction(ece_a: float, ece_b: float) -> float:
    """Fractional ECE reduction going from ``ece_a`` to ``ece_b``."""
    if ece_a == 0:
        return 0.0 if ece_b == 0 else float("-inf")
    return (ece_a - ece_b) / ece_a


def cmd_compare(config: ExperimentConfig, methods: list[str]) -> dict:
    """Train each method per seed and aggregate a table with relative ECE reduction vs the first method."""
    if len(methods) < 2:
        raise InvalidInput("compare needs at least two methods")
    parsed = [parse_method(m) for m in methods]
    out = _mkdir(config.out)
    cache, runs = {}, {}
    columns = []
    for col, (name, params) in enumerate(parsed):
        label = f"{col}_{name}"
        cells = []
        for seed in config.seeds:
            sd = _seed_data_cached(config, seed, out, cache)
            loss = _method_loss(name, params)
            key = (loss, seed)
            if key not in runs:
                run_dir = out / f"seed_{seed}" / f"{loss.kind.value}_{_loss_tag(loss)}"
                runs[key] = run_seed(config, seed, loss, run_dir, f"data/seed_{seed}", sd, fit_temp=True)
            r = runs[key]
            rep = r.temperature_report if name == "temperature" else r.report
            cells.append({
                "seed": int(seed),
                "ece": rep.ece, "mce": rep.mce, "accuracy": rep.accuracy, "nll": rep.nll,
                "temperature": r.scaler.t if name == "temperature" else None,
                "trace": (r.directory.relative_to(out) / "trace.csv").as_posix(),
            })
        columns.append({
            "label": label, "method": name, "params": params, "per_seed": cells,
            "mean_ece": float(np.mean([c["ece"] for c in cells])),
            "mean_mce": float(np.mean([c["mce"] for c in cells])),
            "mean_accuracy": float(np.mean([c["accuracy"] for c in cells])),
        })
    base = columns[0]["mean_ece"]
    for c in columns:
        c["ece_reduction_vs_first"] = relative_reduction(base, c["mean_ece"]) if c is not columns[0] else 0.0
    report = {"config": config.to_dict(), "methods": [m for m in methods], "columns": columns}
    io.write_json(out / "compare.json", report)
    (out / "compare.md").write_text(compare_markdown(columns, config.seeds))
    return report


def _loss_tag(loss: LossSpec) -> str:
    if loss.kind is LossKind.CROSS_ENTROPY:
        return "base"
    if loss.kind is LossKind.LABEL_SMOOTHING:
        return f"a{loss.alpha:g}"
    return f"b{loss.beta:g}"


def compare_markdown(columns: list[dict], seeds) -> str:
    head = "| Seed | " + " | ".join(f"ECE {c['label']}" for c in columns) + " | " + \
        " | ".join(f"Acc {c['label']}" for c in columns) + " |"
    sep = "|" + "---|" * (1 + 2 * len(columns))
    lines = [head, sep]
    for i, seed in enumerate(seeds):
        cells = [f"{c['per_seed'][i]['ece']:.4f}" for c in columns] + \
                [f"{c['per_seed'][i]['accuracy']:.4f}" for c in columns]
        lines.append(f"| {seed} | " + " | ".join(cells) + " |")
    avg = [f"**{c['mean_ece']:.4f}**" for c in columns] + [f"**{c['mean_accuracy']:.4f}**" for c in columns]
    lines.append("| Average | " + " | ".join(avg) + " |")
    lines.append("")
    for c in columns[1:]:
        lines.append(f"- {c['label']}: ECE reduction vs {columns[0]['label']} = "
                     f"{100 * c['ece_reduction_vs_first']:.2f}%")
    return "\n".join(lines) + "\n"


def evaluate_predictions(logits, labels, m_bins: int, temperature: float | None = None) -> CalibrationReport:
    ps = PredictionSet.from_logits(logits, labels) if temperature is None else \
        TemperatureScaler(t=temperature).predictions(logits, labels)
    return calibration_report(ps, m_bins)


def write_report_bundle(out, report: CalibrationReport, extra: dict | None = None, title="Reliability diagram"):
    out = _mkdir(out)
    io.write_json(out / "report.json", dict(extra or {}, report=report.to_dict()))
    io.write_reliability_csv(out / "reliability.csv", report)
    (out / "reliability.svg").write_text(io.reliability_svg(report, title))
    return out
