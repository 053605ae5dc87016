"""Calibration-error estimators (ECE, MCE), bin statistics, NLL and accuracy.

Every reduction runs in a fixed order (ascending sample index within a bin,
ascending bin index across bins), so reports are reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyBin, InvalidInput
from .probs import PredictionSet, partition

NLL_FLOOR = 1e-12


@dataclass(frozen=True)
class BinStats:
    bin_index: int
    lower: float
    upper: float
    count: int
    accuracy: float
    mean_confidence: float

    @property
    def gap(self) -> float:
        return abs(self.accuracy - self.mean_confidence)


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    mce: float
    accuracy: float
    nll: float
    m_bins: int
    n: int
    bins: list[BinStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        for row, b in zip(d["bins"], self.bins):
            row["gap"] = b.gap
        return d


def _check_members(members, preds: PredictionSet) -> np.ndarray:
    idx = np.asarray(members, dtype=np.int64)
    if idx.size == 0:
        raise EmptyBin("statistic undefined on an empty bin")
    return idx


def bin_accuracy(members, preds: PredictionSet) -> float:
    """Fraction of samples in the bin whose argmax matches the true label."""
    idx = _check_members(members, preds)
    return float(preds.correct[idx].sum() / idx.size)


def bin_confidence(members, preds: PredictionSet) -> float:
    idx = _check_members(members, preds)
    return float(preds.confidences[idx].sum() / idx.size)


def reliability_table(preds: PredictionSet, m_bins: int) -> list[BinStats]:
    """One row per non-empty bin, in ascending bin order."""
    part = partition(preds, m_bins)
    rows = []
    for b in range(part.m_bins):
        c = int(part.counts[b])
        if c == 0:
            continue
        lo, hi = part.bounds(b)
        rows.append(
            BinStats(
                bin_index=b,
                lower=lo,
                upper=hi,
                count=c,
                accuracy=float(part.correct_sum[b] / c),
                mean_confidence=float(part.conf_sum[b] / c),
            )
        )
    return rows


def ece_from_table(rows: list[BinStats], n: int) -> float:
    total = 0.0
    for r in rows:
        total += (r.count / n) * abs(r.accuracy - r.mean_confidence)
    return total


def mce_from_table(rows: list[BinStats]) -> float:
    return max((abs(r.accuracy - r.mean_confidence) for r in rows), default=0.0)


def _require_nonempty(preds: PredictionSet):
    if preds is None or preds.n == 0:
        raise InvalidInput("empty PredictionSet")


def ece(preds: PredictionSet, m_bins: int) -> float:
    """Expected calibration error over ``m_bins`` equal-width bins."""
    _require_nonempty(preds)
    return ece_from_table(reliability_table(preds, m_bins), preds.n)


def mce(preds: PredictionSet, m_bins: int) -> float:
    """Largest |accuracy - confidence| over the non-empty bins."""
    _require_nonempty(preds)
    return mce_from_table(reliability_table(preds, m_bins))


def accuracy(preds: PredictionSet) -> float:
    return float(preds.correct.mean())


def nll(preds: PredictionSet) -> float:
    """Mean negative log true-class probability, probabilities floored at 1e-12."""
    p_true = preds.probs[np.arange(preds.n), preds.true_labels]
    return float(-np.mean(np.log(np.maximum(p_true, NLL_FLOOR))))


def calibration_report(preds: PredictionSet, m_bins: int) -> CalibrationReport:
    _require_nonempty(preds)
    rows = reliability_table(preds, m_bins)
    return CalibrationReport(
        ece=ece_from_table(rows, preds.n),
        mce=mce_from_table(rows),
        accuracy=accuracy(preds),
        nll=nll(preds),
        m_bins=int(m_bins),
        n=preds.n,
        bins=rows,
    )
