"""File formats: checkpoints, prediction logs, reports, CSV tables and SVG diagrams.

Checkpoints are JSON with every float64 stored as ``float.hex()`` so a round
trip is lossless. Prediction logs are JSON lines ``{"logits": [...], "label": k}``
with 0-based labels.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .metrics import BinStats, CalibrationReport
from .nn import EpochRecord, Layer, MlpModel, TrainingTrace

CHECKPOINT_FORMAT = "dcacal-checkpoint"
CHECKPOINT_VERSION = 1
RELIABILITY_COLUMNS = ["bin_index", "lower", "upper", "count", "accuracy", "confidence", "gap"]
TRACE_COLUMNS = ["epoch", "train_loss", "train_acc", "test_loss", "test_acc"]


def _ensure_parent(path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create directory {path.parent}: {exc}") from exc
    return path


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = _ensure_parent(path)
    path.write_text(dumps_json(obj))
    return path


def _hex(a) -> list:
    return [float(v).hex() for v in np.asarray(a, dtype=np.float64).ravel()]


def _unhex(values, shape) -> np.ndarray:
    return np.array([float.fromhex(v) for v in values], dtype=np.float64).reshape(shape)


def checkpoint_dict(model: MlpModel, train_config: dict | None = None, temperature: float | None = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": model.input_dim,
        "class_count": model.class_count,
        "layers": [
            {
                "in": int(layer.weights.shape[0]),
                "out": int(layer.weights.shape[1]),
                "activation": layer.activation,
                "weights": _hex(layer.weights),
                "biases": _hex(layer.biases),
            }
            for layer in model.layers
        ],
        "temperature": None if temperature is None else float(temperature).hex(),
        "train_config": train_config,
    }


def save_checkpoint(path, model: MlpModel, train_config: dict | None = None, temperature: float | None = None) -> Path:
    return write_json(path, checkpoint_dict(model, train_config, temperature))


def load_checkpoint(path) -> tuple[MlpModel, float | None, dict | None]:
    """Returns ``(model, temperature, train_config)``."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"{path}: cannot read checkpoint: {exc}") from None
    if d.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInput(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if d.get("version") != CHECKPOINT_VERSION:
        raise InvalidInput(f"{path}: unsupported checkpoint version {d.get('version')}")
    layers = [
        Layer(_unhex(l["weights"], (l["in"], l["out"])), _unhex(l["biases"], (l["out"],)), l["activation"])
        for l in d["layers"]
    ]
    t = d.get("temperature")
    return MlpModel(layers), (None if t is None else float.fromhex(t)), d.get("train_config")


def write_prediction_log(path, logits, labels) -> Path:
    path = _ensure_parent(path)
    z = np.asarray(logits, dtype=np.float64)
    with path.open("w") as fh:
        for row, y in zip(z, np.asarray(labels)):
            fh.write(json.dumps({"label": int(y), "logits": [float(v) for v in row]}) + "\n")
    return path


def read_prediction_log(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a JSON-lines prediction log; errors name the offending line."""
    path = Path(path)
    logits, labels = [], []
    k = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                row = [float(v) for v in rec["logits"]]
                label = rec["label"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InvalidInput(f"{path}:{lineno}: malformed record ({exc})") from None
            if isinstance(label, bool) or not isinstance(label, int):
                raise InvalidInput(f"{path}:{lineno}: label must be an integer")
            if not all(math.isfinite(v) for v in row):
                raise InvalidInput(f"{path}:{lineno}: non-finite logit")
            if k is None:
                k = len(row)
                if k < 2:
                    raise InvalidInput(f"{path}:{lineno}: need at least 2 logits")
            elif len(row) != k:
                raise InvalidInput(f"{path}:{lineno}: expected {k} logits, got {len(row)}")
            if not 0 <= label < k:
                raise InvalidInput(f"{path}:{lineno}: label {label} outside [0, {k - 1}]")
            logits.append(row)
            labels.append(label)
    if not logits:
        raise InvalidInput(f"{path}: no records")
    return np.array(logits, dtype=np.float64), np.array(labels, dtype=np.int64)


def write_reliability_csv(path, report: CalibrationReport) -> Path:
    path = _ensure_parent(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RELIABILITY_COLUMNS)
        for b in report.bins:
            w.writerow([b.bin_index, repr(b.lower), repr(b.upper), b.count,
                        repr(b.accuracy), repr(b.mean_confidence), repr(b.gap)])
    return path


def read_reliability_csv(path) -> list[BinStats]:
    rows = []
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append(BinStats(int(r["bin_index"]), float(r["lower"]), float(r["upper"]),
                                 int(r["count"]), float(r["accuracy"]), float(r["confidence"])))
    return rows


def write_trace_csv(path, trace: TrainingTrace) -> Path:
    path = _ensure_parent(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.test_loss), repr(r.test_acc)])
    return path


def read_trace_csv(path) -> list[EpochRecord]:
    with Path(path).open(newline="") as fh:
        return [
            EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]),
                        float(r["test_loss"]), float(r["test_acc"]))
            for r in csv.DictReader(fh)
        ]


def write_rows_csv(path, header: list[str], rows) -> Path:
    path = _ensure_parent(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def reliability_svg(report: CalibrationReport, title: str = "Reliability diagram", size: int = 360) -> str:
    """Self-contained SVG: per-bin accuracy bars, confidence markers and the diagonal."""
    pad = 40
    inner = size - 2 * pad

    def sx(v):
        return pad + v * inner

    def sy(v):
        return size - pad - v * inner

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<text x="{size / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{inner}" height="{inner}" fill="none" stroke="black"/>',
    ]
    for b in report.bins:
        x0, x1 = sx(b.lower), sx(b.upper)
        parts.append(
            f'<rect x="{x0:.2f}" y="{sy(b.accuracy):.2f}" width="{x1 - x0:.2f}" '
            f'height="{sy(0) - sy(b.accuracy):.2f}" fill="#4477aa" stroke="#223355"/>'
        )
        lo, hi = sorted((b.accuracy, b.mean_confidence))
        parts.append(
            f'<rect x="{x0:.2f}" y="{sy(hi):.2f}" width="{x1 - x0:.2f}" height="{sy(lo) - sy(hi):.2f}" '
            f'fill="#cc6677" fill-opacity="0.35" stroke="#cc6677"/>'
        )
    parts.append(f'<line x1="{sx(0):.2f}" y1="{sy(0):.2f}" x2="{sx(1):.2f}" y2="{sy(1):.2f}" '
                 f'stroke="gray" stroke-dasharray="4 3"/>')
    for t in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{sx(t):.1f}" y="{size - pad + 15}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{t:g}</text>')
        parts.append(f'<text x="{pad - 6}" y="{sy(t) + 3:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{t:g}</text>')
    parts.append(f'<text x="{size / 2:.1f}" y="{size - 8}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="11">confidence</text>')
    parts.append(f'<text x="{pad + 6}" y="{pad + 16}" font-family="sans-serif" font-size="11">'
                 f'ECE={report.ece:.4f} MCE={report.mce:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def curves_svg(curves: dict[str, list[tuple[float, float, float]]], size: int = 360) -> str:
    """Recovered p(y=1|x) curves against the true curve, one panel per method."""
    pad = 30
    names = list(curves)
    width = size * max(len(names), 1)
    inner = size - 2 * pad
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{size}" '
             f'viewBox="0 0 {width} {size}">', f'<rect width="{width}" height="{size}" fill="white"/>']
    for i, name in enumerate(names):
        ox = i * size
        rows = curves[name]
        xs = [r[0] for r in rows]
        lo, hi = min(xs), max(xs)
        span = (hi - lo) or 1.0

        def pt(x, p):
            return f"{ox + pad + (x - lo) / span * inner:.2f},{size - pad - p * inner:.2f}"

        parts.append(f'<rect x="{ox + pad}" y="{pad}" width="{inner}" height="{inner}" fill="none" stroke="black"/>')
        parts.append(f'<polyline fill="none" stroke="#88ccee" stroke-width="2" '
                     f'points="{" ".join(pt(x, t) for x, _, t in rows)}"/>')
        parts.append(f'<polyline fill="none" stroke="#cc3311" stroke-width="1.5" '
                     f'points="{" ".join(pt(x, p) for x, p, _ in rows)}"/>')
        parts.append(f'<text x="{ox + size / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
