"""A minimal dense network trained with any ``LossSpec``.

Layers are ``(weights (in, out), biases (out,), activation)``; the last layer
is linear and emits logits.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInput
from .losses import BatchLossResult, LossSpec, composite_loss
from .metrics import CalibrationReport, calibration_report
from .probs import PredictionSet, softmax

LEAKY_SLOPE = 0.01
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8

LEAKY_RELU = "leaky_relu"
IDENTITY = "identity"


@dataclass
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = IDENTITY


@dataclass
class MlpModel:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise InvalidInput("model needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise InvalidInput("adjacent layer dimensions do not chain")
        for layer in self.layers:
            if layer.activation not in (LEAKY_RELU, IDENTITY):
                raise InvalidInput(f"unknown activation {layer.activation!r}")
            if layer.biases.shape != (layer.weights.shape[1],):
                raise InvalidInput("bias shape does not match layer width")
        if self.layers[-1].activation != IDENTITY:
            raise InvalidInput("final layer must be linear (logits out)")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def class_count(self) -> int:
        return self.layers[-1].weights.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.weights.shape[1] for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


def init_mlp(sizes: list[int], seed: int = 0, activation: str = LEAKY_RELU) -> MlpModel:
    """Glorot-uniform weights, biases uniform in +-1/sqrt(fan_in); hidden layers use ``activation``."""
    if len(sizes) < 2:
        raise InvalidInput("sizes must list at least input and output widths")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        last = i == len(sizes) - 2
        b = rng.uniform(-1.0, 1.0, size=fan_out) / np.sqrt(fan_in)
        layers.append(Layer(w, b, IDENTITY if last else activation))
    return MlpModel(layers)


def _activate(a, kind):
    if kind == LEAKY_RELU:
        return np.where(a > 0, a, LEAKY_SLOPE * a)
    return a


def _forward_cached(model: MlpModel, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if model.input_dim == 1 else x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise InvalidInput(f"input width {x.shape[-1]} does not match model input_dim {model.input_dim}")
    cache = []
    h = x
    for layer in model.layers:
        pre = h @ layer.weights + layer.biases
        cache.append((h, pre))
        h = _activate(pre, layer.activation)
    return h, cache


def forward(model: MlpModel, inputs) -> np.ndarray:
    """Logits for a batch of inputs."""
    return _forward_cached(model, inputs)[0]


def backward(model: MlpModel, inputs, labels, loss_spec: LossSpec):
    """Loss on the batch and exact gradients for every layer's weights and biases.

    Returns ``(BatchLossResult, [(dW, db), ...])``.
    """
    logits, cache = _forward_cached(model, inputs)
    result = composite_loss(loss_spec, logits, labels)
    delta = result.grad_logits
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        h_in, pre = cache[i]
        if layer.activation == LEAKY_RELU:
            delta = delta * np.where(pre > 0, 1.0, LEAKY_SLOPE)
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.weights.T
    return result, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(state.m):
        raise InvalidInput("optimizer state does not match parameters")
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-4
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInput("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidInput("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise InvalidInput("learning_rate must be >= 0")
        if isinstance(self.loss, dict):
            self.loss = LossSpec.from_dict(self.loss)

    def to_dict(self) -> dict:
        return {
            "epochs": int(self.epochs),
            "batch_size": int(self.batch_size),
            "learning_rate": float(self.learning_rate),
            "seed": int(self.seed),
            "loss": self.loss.to_dict(),
            "shuffle": bool(self.shuffle),
        }


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float


@dataclass
class TrainingTrace:
    records: list[EpochRecord] = field(default_factory=list)
    final_report: CalibrationReport | None = None
    degenerate_batches: int = 0


def evaluate_loss(model: MlpModel, inputs, labels, loss_spec: LossSpec) -> tuple[float, float]:
    """Full-set composite loss (one batch) and accuracy."""
    logits = forward(model, inputs)
    res: BatchLossResult = composite_loss(loss_spec, logits, labels)
    acc = float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))
    return res.total, acc


def train(
    model: MlpModel,
    train_set,
    test_set,
    config: TrainConfig,
    *,
    m_bins: int = 10,
    on_epoch_end: Callable[[int, MlpModel], None] | None = None,
) -> tuple[MlpModel, TrainingTrace]:
    """Mini-batch Adam training; returns a trained copy of ``model`` and its trace.

    ``train_set``/``test_set`` expose ``inputs`` and ``labels``. Each epoch
    record holds full-set losses evaluated with the epoch-end parameters.
    """
    x = np.asarray(train_set.inputs, dtype=np.float64)
    y = np.asarray(train_set.labels, dtype=np.int64)
    if np.unique(y).size < 2:
        raise InvalidInput("training set contains a single class")
    xt = np.asarray(test_set.inputs, dtype=np.float64)
    yt = np.asarray(test_set.labels, dtype=np.int64)

    model = model.copy()
    params = model.parameters()
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(config.seed)
    trace = TrainingTrace()
    n = x.shape[0]

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            result, layer_grads = backward(model, x[idx], y[idx], config.loss)
            trace.degenerate_batches += int(result.degenerate)
            flat = [g for pair in layer_grads for g in pair]
            adam_step(params, flat, state, config.learning_rate)
        train_loss, train_acc = evaluate_loss(model, x, y, config.loss)
        test_loss, test_acc = evaluate_loss(model, xt, yt, config.loss)
        trace.records.append(EpochRecord(epoch, train_loss, train_acc, test_loss, test_acc))
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)

    trace.final_report = calibration_report(PredictionSet(softmax(forward(model, xt)), yt), m_bins)
    return model, trace
