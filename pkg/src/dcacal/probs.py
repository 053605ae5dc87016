"""Probability-vector arithmetic, argmax prediction and equal-width binning.

Class indices are 0-based throughout the package. Bin ``b`` (0-based) covers
the confidence interval ``(b/M, (b+1)/M]``; a confidence of exactly 0 is
clamped into bin 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InvalidInput


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a ``(K,)`` or ``(n, K)`` array, max-subtracted."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim not in (1, 2) or z.shape[-1] < 2:
        raise InvalidInput(f"logits must have shape (K,) or (n, K) with K >= 2, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInput("logits contain non-finite values")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def predict(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, confidences)``; ties go to the lowest class index.

    Accepts a single probability vector (returns scalars) or an ``(n, K)`` batch.
    """
    p = np.asarray(probs, dtype=np.float64)
    # np.argmax returns the first maximal index
    labels = np.argmax(p, axis=-1)
    conf = np.max(p, axis=-1)
    if p.ndim == 1:
        return int(labels), float(conf)
    return labels, conf


@dataclass(frozen=True)
class PredictionSet:
    """Per-sample probability vectors with their argmax predictions and true labels."""

    probs: np.ndarray
    true_labels: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        true = np.asarray(self.true_labels)
        if probs.ndim != 2 or probs.shape[1] < 2:
            raise InvalidInput(f"probs must be (n, K) with K >= 2, got {probs.shape}")
        if probs.shape[0] == 0:
            raise InvalidInput("empty PredictionSet")
        if not np.all(np.isfinite(probs)) or probs.min() < 0 or np.max(np.abs(probs.sum(axis=1) - 1)) > 1e-9:
            raise InvalidInput("probs rows must be non-negative and sum to 1")
        if true.shape != (probs.shape[0],):
            raise InvalidInput(f"true_labels shape {true.shape} does not match n={probs.shape[0]}")
        if not np.issubdtype(true.dtype, np.integer):
            if not np.all(np.equal(np.mod(true, 1), 0)):
                raise InvalidInput("true_labels must be integers")
            true = true.astype(np.int64)
        if true.min() < 0 or true.max() >= probs.shape[1]:
            raise InvalidInput(f"true_labels must lie in [0, {probs.shape[1] - 1}]")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "true_labels", true.astype(np.int64))
        if self.logits is not None:
            object.__setattr__(self, "logits", np.asarray(self.logits, dtype=np.float64))

    @classmethod
    def from_logits(cls, logits, true_labels) -> "PredictionSet":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(softmax(logits), true_labels, logits=logits)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)

    @property
    def confidences(self) -> np.ndarray:
        return np.max(self.probs, axis=1)

    @property
    def correct(self) -> np.ndarray:
        return (self.labels == self.true_labels).astype(np.float64)


@dataclass(frozen=True)
class BinPartition:
    """Equal-width confidence bins with per-bin membership and running sums."""

    m_bins: int
    assignment: np.ndarray
    counts: np.ndarray
    conf_sum: np.ndarray
    correct_sum: np.ndarray

    @property
    def membership(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == b) for b in range(self.m_bins)]

    def bounds(self, b: int) -> tuple[float, float]:
        return b / self.m_bins, (b + 1) / self.m_bins


def partition(preds: PredictionSet, m_bins: int) -> BinPartition:
    if int(m_bins) != m_bins or m_bins < 1:
        raise InvalidInput(f"m_bins must be a positive integer, got {m_bins!r}")
    m_bins = int(m_bins)
    counts, conf_sum, corr_sum, assign = _backend.bin_stats(
        np.ascontiguousarray(preds.confidences), np.ascontiguousarray(preds.correct), m_bins
    )
    return BinPartition(
        m_bins=m_bins,
        assignment=np.asarray(assign, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        conf_sum=np.asarray(conf_sum),
        correct_sum=np.asarray(corr_sum),
    )
