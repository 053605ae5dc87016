"""Seeded synthetic datasets: the 1-D probability-recovery task and Gaussian blobs.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``, recorded as
``generator`` in each dataset's metadata.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .posthoc import apply_temperature

RNG_NAME = "numpy.PCG64"
TOY_LOW, TOY_HIGH = -2.0, 2.0
MAX_SPLIT_ATTEMPTS = 100


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class GroundTruthCurve:
    """p(y=1 | x) on [-2, 2].

    kinds: ``logistic`` (1/(1+exp(-scale*x))), ``linear_ramp`` ((x+2)/4),
    ``constant`` (``value``), ``step`` (1 for x > 0), ``custom``
    (piecewise-linear through ``table`` points).
    """

    kind: str = "logistic"
    scale: float = 2.0
    value: float = 0.5
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("logistic", "linear_ramp", "constant", "step", "custom"):
            raise InvalidInput(f"unknown curve kind {self.kind!r}")
        if self.kind == "constant" and not 0.0 <= self.value <= 1.0:
            raise InvalidInput("constant curve value must lie in [0, 1]")
        if self.kind == "custom":
            pts = np.asarray(self.table, dtype=np.float64)
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
                raise InvalidInput("custom curve table must be a list of (x, p) pairs")
            if np.any(np.diff(pts[:, 0]) <= 0):
                raise InvalidInput("custom curve x values must be strictly increasing")
            if np.any((pts[:, 1] < 0) | (pts[:, 1] > 1)):
                raise InvalidInput("custom curve probabilities must lie in [0, 1]")
            object.__setattr__(self, "table", tuple(map(tuple, pts.tolist())))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "logistic":
            return 0.5 * (1.0 + np.tanh(0.5 * self.scale * x))
        if self.kind == "linear_ramp":
            return np.clip((x - TOY_LOW) / (TOY_HIGH - TOY_LOW), 0.0, 1.0)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        if self.kind == "step":
            return (x > 0).astype(np.float64)
        pts = np.asarray(self.table)
        return np.interp(x, pts[:, 0], pts[:, 1])

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "logistic":
            d["scale"] = float(self.scale)
        elif self.kind == "constant":
            d["value"] = float(self.value)
        elif self.kind == "custom":
            d["table"] = [list(p) for p in self.table]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthCurve":
        d = dict(d)
        if "table" in d:
            d["table"] = tuple(tuple(p) for p in d["table"])
        return cls(**d)


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    k: int
    ground_truth: GroundTruthCurve | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] == 0:
            raise InvalidInput("dataset is empty")
        if self.labels.shape != (self.inputs.shape[0],):
            raise InvalidInput("labels do not match inputs")
        if self.labels.min() < 0 or self.labels.max() >= self.k:
            raise InvalidInput(f"labels must lie in [0, {self.k - 1}]")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.k, self.ground_truth, dict(self.metadata))


def gen_toy1d(n: int, seed: int = 0, curve: GroundTruthCurve | None = None) -> Dataset:
    """x ~ U(-2, 2), y ~ Bernoulli(curve(x))."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    curve = curve or GroundTruthCurve()
    rng = _rng(seed)
    x = rng.uniform(TOY_LOW, TOY_HIGH, size=n)
    y = (rng.random(n) < curve(x)).astype(np.int64)
    meta = {"kind": "toy1d", "generator": RNG_NAME, "seed": int(seed), "n": int(n), "curve": curve.to_dict()}
    return Dataset(x[:, None], y, 2, curve, meta)


def _blob_centers(k: int, dim: int, separation: float, rng) -> np.ndarray:
    if dim == 1:
        return np.linspace(-separation, separation, k)[:, None]
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    if k <= dim:
        return separation * q[:, :k].T
    angles = 2.0 * np.pi * np.arange(k) / k
    return separation * (np.cos(angles)[:, None] * q[:, 0] + np.sin(angles)[:, None] * q[:, 1])


def gen_blobs(k: int, n_per_class: int, separation: float, dim: int = 2, seed: int = 0) -> Dataset:
    """Unit-variance isotropic Gaussian clusters, centres at radius ``separation`` on a random frame."""
    if k < 2 or n_per_class < 1 or dim < 1:
        raise InvalidInput("need k >= 2, n_per_class >= 1, dim >= 1")
    rng = _rng(seed)
    centers = _blob_centers(k, dim, separation, rng)
    labels = np.repeat(np.arange(k), n_per_class)
    x = centers[labels] + rng.standard_normal((labels.size, dim))
    order = rng.permutation(labels.size)
    meta = {
        "kind": "blobs", "generator": RNG_NAME, "seed": int(seed), "k": int(k),
        "n_per_class": int(n_per_class), "separation": float(separation), "dim": int(dim),
    }
    return Dataset(x[order], labels[order], k, None, meta)


def split(data: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random split; reshuffles until the training part holds at least two classes."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInput("test_fraction must lie in (0, 1)")
    if data.n < 2:
        raise InvalidInput("need at least 2 samples to split")
    n_test = min(max(int(round(data.n * test_fraction)), 1), data.n - 1)
    rng = _rng(seed)
    for _ in range(MAX_SPLIT_ATTEMPTS):
        perm = rng.permutation(data.n)
        test_idx, train_idx = perm[:n_test], perm[n_test:]
        if np.unique(data.labels[train_idx]).size >= 2:
            return data.subset(train_idx), data.subset(test_idx)
    raise InvalidInput(f"no split with a multi-class training part after {MAX_SPLIT_ATTEMPTS} attempts")


def default_grid(points: int = 81) -> np.ndarray:
    return np.linspace(TOY_LOW, TOY_HIGH, points)


def recover_curve(model, temperature: float | None = None, grid=None, curve: GroundTruthCurve | None = None):
    """Model's class-1 probability on ``grid`` paired with the true curve.

    Returns a list of ``(x, predicted, true)`` tuples.
    """
    from .nn import forward

    if model.input_dim != 1:
        raise InvalidInput(f"curve recovery needs a 1-D input model, got input_dim={model.input_dim}")
    xs = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if xs.size == 0:
        raise InvalidInput("grid is empty")
    curve = curve or GroundTruthCurve()
    logits = forward(model, xs[:, None])
    probs = apply_temperature(logits, 1.0 if temperature is None else temperature)
    return [(float(x), float(p), float(t)) for x, p, t in zip(xs, probs[:, 1], curve(xs))]


def curve_score(curve_rows) -> float:
    """Mean absolute deviation between recovered and true probability."""
    return float(np.mean([abs(p - t) for _, p, t in curve_rows]))


def save_csv(data: Dataset, path) -> Path:
    """Write features + label rows, and a ``.meta.json`` sidecar next to it."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(data.dim)] + ["label"])
        for row, y in zip(data.inputs, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])
    meta = dict(data.metadata, k=int(data.k))
    if data.ground_truth is not None:
        meta["curve"] = data.ground_truth.to_dict()
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_csv(path, k: int | None = None) -> Dataset:
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    xs, ys = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise InvalidInput(f"{path}: header must end with a 'label' column")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InvalidInput(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                xs.append([float(v) for v in row[:-1]])
                ys.append(int(row[-1]))
            except ValueError as exc:
                raise InvalidInput(f"{path}:{lineno}: {exc}") from None
    k = k or meta.get("k") or (max(ys) + 1)
    curve = GroundTruthCurve.from_dict(meta["curve"]) if "curve" in meta else None
    return Dataset(np.array(xs), np.array(ys), int(k), curve, meta)
