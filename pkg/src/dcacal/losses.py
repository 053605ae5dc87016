"""Training objectives: cross-entropy plus calibration auxiliaries.

All functions take a batch of logits ``(N, K)`` and integer labels ``(N,)``
and return gradients with respect to the logits. Batch means always divide by
the actual batch size ``N``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DegenerateBatch, EmptyBatch, InvalidInput
from .probs import log_softmax, softmax

log = logging.getLogger(__name__)

DEFAULT_KERNEL_WIDTH = 0.4


class LossKind(str, enum.Enum):
    CROSS_ENTROPY = "ce"
    DCA = "dca"
    ENTROPY_PENALTY = "entropy"
    LABEL_SMOOTHING = "label_smoothing"
    MMCE = "mmce"


@dataclass(frozen=True)
class LossSpec:
    """Objective selector.

    ``beta`` weights the DCA, entropy and MMCE terms; ``alpha`` is the label
    smoothing amount. ``entropy_sign`` is -1 for the confidence penalty
    (CE - beta*H); +1 adds the entropy instead.
    """

    kind: LossKind = LossKind.CROSS_ENTROPY
    beta: float = 0.0
    alpha: float = 0.0
    kernel_width: float = DEFAULT_KERNEL_WIDTH
    entropy_sign: float = -1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not np.isfinite(self.beta) or self.beta < 0:
            raise InvalidInput(f"beta must be finite and >= 0, got {self.beta}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInput(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.kernel_width > 0:
            raise InvalidInput(f"kernel_width must be > 0, got {self.kernel_width}")
        if self.entropy_sign not in (-1.0, 1.0):
            raise InvalidInput("entropy_sign must be -1 or +1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "beta": float(self.beta),
            "alpha": float(self.alpha),
            "kernel_width": float(self.kernel_width),
            "entropy_sign": float(self.entropy_sign),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(**d)


@dataclass
class BatchLossResult:
    total: float
    ce_part: float
    aux_part: float
    grad_logits: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class MmceBatch:
    correctness: np.ndarray
    confidences: np.ndarray

    @property
    def n_batch(self) -> int:
        return int(self.confidences.shape[0])

    @property
    def n_correct(self) -> int:
        return int(np.sum(self.correctness > 0.5))


def _check_batch(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise EmptyBatch("loss requires a non-empty (N, K) batch")
    if y.shape != (z.shape[0],):
        raise InvalidInput(f"labels shape {y.shape} does not match batch size {z.shape[0]}")
    return z, y


def _confidence_jacobian(probs: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Row i holds d p[i, pred_i] / d logits[i]."""
    n = probs.shape[0]
    p_hat = probs[np.arange(n), pred]
    jac = -p_hat[:, None] * probs
    jac[np.arange(n), pred] += p_hat
    return jac


def cross_entropy(logits, labels) -> BatchLossResult:
    z, y = _check_batch(logits, labels)
    n = z.shape[0]
    logp = log_softmax(z)
    ce = float(-np.mean(logp[np.arange(n), y]))
    grad = softmax(z)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return BatchLossResult(total=ce, ce_part=ce, aux_part=0.0, grad_logits=grad)


def dca(probs, labels) -> float:
    """|mean correctness - mean predicted-class probability| over the batch."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.ndim != 2 or p.shape[0] == 0:
        raise EmptyBatch("dca requires a non-empty batch")
    pred = np.argmax(p, axis=1)
    acc = np.mean(pred == y)
    conf = np.mean(p[np.arange(p.shape[0]), pred])
    return float(abs(acc - conf))


def dca_gradient(logits, labels) -> np.ndarray:
    """Gradient of the DCA term w.r.t. logits with the accuracy term held fixed.

    At DCA = 0 the zero subgradient is returned.
    """
    z, y = _check_batch(logits, labels)
    n = z.shape[0]
    p = softmax(z)
    pred = np.argmax(p, axis=1)
    acc = np.mean(pred == y)
    conf = np.mean(p[np.arange(n), pred])
    direction = -np.sign(acc - conf)
    if direction == 0:
        return np.zeros_like(z)
    return direction / n * _confidence_jacobian(p, pred)


def smooth_targets(labels, k: int, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput(f"alpha must lie in [0, 1], got {alpha}")
    y = np.asarray(labels, dtype=np.int64)
    t = np.full((y.shape[0], k), alpha / k)
    t[np.arange(y.shape[0]), y] += 1.0 - alpha
    return t


def entropy_of(probs) -> float | np.ndarray:
    """Shannon entropy in nats, with 0 log 0 = 0; row-wise for a batch."""
    p = np.asarray(probs, dtype=np.float64)
    logs = np.log(np.where(p > 0, p, 1.0))
    h = -np.sum(p * logs, axis=-1)
    return float(h) if p.ndim == 1 else h


def mmce_weighted_raw(batch: MmceBatch, kernel_width: float = DEFAULT_KERNEL_WIDTH):
    """Unclamped weighted MMCE^2 and its gradient w.r.t. each confidence."""
    if not 0 < batch.n_correct < batch.n_batch:
        raise DegenerateBatch(
            f"weighted MMCE needs correct and incorrect samples "
            f"(n_correct={batch.n_correct}, n_batch={batch.n_batch})"
        )
    value, grad = _backend.mmce_weighted(
        np.ascontiguousarray(batch.confidences, dtype=np.float64),
        np.ascontiguousarray(batch.correctness, dtype=np.float64),
        float(kernel_width),
    )
    return float(value), np.asarray(grad)


def mmce_weighted(batch: MmceBatch, kernel_width: float = DEFAULT_KERNEL_WIDTH) -> float:
    """Weighted MMCE^2 with Laplacian kernel ``exp(-|p - q| / width)``, clamped at 0."""
    value, _ = mmce_weighted_raw(batch, kernel_width)
    return max(0.0, value)


def composite_loss(spec: LossSpec, logits, labels) -> BatchLossResult:
    """Evaluate the objective selected by ``spec`` on one batch."""
    z, y = _check_batch(logits, labels)
    kind = spec.kind
    if kind is LossKind.CROSS_ENTROPY:
        return cross_entropy(z, y)
    if kind is LossKind.LABEL_SMOOTHING:
        return _label_smoothing(spec, z, y)

    base = cross_entropy(z, y)
    n = z.shape[0]
    if kind is LossKind.DCA:
        aux = dca(softmax(z), y)
        aux_grad = dca_gradient(z, y)
        total = base.total + spec.beta * aux
        grad = base.grad_logits + spec.beta * aux_grad
        return BatchLossResult(total, base.ce_part, aux, grad)

    if kind is LossKind.ENTROPY_PENALTY:
        p = softmax(z)
        logp = log_softmax(z)
        h = -np.sum(p * logp, axis=1)
        aux = float(np.mean(h))
        # dH/dz_j = -p_j (log p_j + H)
        h_grad = -p * (logp + h[:, None]) / n
        w = spec.entropy_sign * spec.beta
        return BatchLossResult(base.total + w * aux, base.ce_part, aux, base.grad_logits + w * h_grad)

    if kind is LossKind.MMCE:
        p = softmax(z)
        pred = np.argmax(p, axis=1)
        conf = p[np.arange(n), pred]
        batch = MmceBatch(correctness=(pred == y).astype(np.float64), confidences=conf)
        try:
            value, dv = mmce_weighted_raw(batch, spec.kernel_width)
        except DegenerateBatch as exc:
            log.debug("MMCE skipped, falling back to cross-entropy: %s", exc)
            return BatchLossResult(base.total, base.ce_part, 0.0, base.grad_logits, degenerate=True)
        aux = float(np.sqrt(max(value, 0.0)))
        if aux > 0.0:
            aux_grad = (dv / (2.0 * aux))[:, None] * _confidence_jacobian(p, pred)
        else:
            aux_grad = np.zeros_like(z)
        return BatchLossResult(base.total + spec.beta * aux, base.ce_part, aux, base.grad_logits + spec.beta * aux_grad)

    raise InvalidInput(f"unknown loss kind {kind!r}")


def _label_smoothing(spec: LossSpec, z, y) -> BatchLossResult:
    if spec.alpha == 0.0:
        return cross_entropy(z, y)
    n, k = z.shape
    t = smooth_targets(y, k, spec.alpha)
    logp = log_softmax(z)
    total = float(-np.mean(np.sum(t * logp, axis=1)))
    ce = float(-np.mean(logp[np.arange(n), y]))
    uniform = float(-np.mean(np.mean(logp, axis=1)))
    grad = (softmax(z) - t) / n
    # total = ce + alpha * (uniform - ce), up to rounding
    return BatchLossResult(total, ce, uniform - ce, grad)
