"""Post-hoc temperature scaling fitted on held-out logits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .metrics import ece, nll
from .probs import PredictionSet, softmax

T_MIN, T_MAX = 0.05, 20.0
GRID_POINTS = 60
T_TOL = 1e-4
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def apply_temperature(logits, t: float) -> np.ndarray:
    if not t > 0 or not math.isfinite(t):
        raise InvalidInput(f"temperature must be finite and > 0, got {t}")
    z = np.asarray(logits, dtype=np.float64)
    if t == 1.0:
        return softmax(z)
    return softmax(z / t)


@dataclass
class TemperatureScaler:
    t: float = 1.0
    fit_nll: float = float("nan")
    objective: str = "nll"
    search_trace: list[tuple[float, float]] = field(default_factory=list)

    def transform(self, logits) -> np.ndarray:
        return apply_temperature(logits, self.t)

    def predictions(self, logits, labels) -> PredictionSet:
        z = np.asarray(logits, dtype=np.float64)
        return PredictionSet(self.transform(z), labels, logits=z)


def _objective(logits, labels, kind: str, m_bins: int):
    def f(t: float) -> float:
        ps = PredictionSet(apply_temperature(logits, t), labels)
        return nll(ps) if kind == "nll" else ece(ps, m_bins)

    return f


def fit_temperature(
    val_logits,
    val_labels,
    *,
    t_range: tuple[float, float] = (T_MIN, T_MAX),
    grid_points: int = GRID_POINTS,
    tol: float = T_TOL,
    objective: str = "nll",
    m_bins: int = 10,
) -> TemperatureScaler:
    """Fit a single temperature by log-spaced grid search plus golden-section refinement.

    ``objective`` is ``"nll"`` (default) or ``"ece"``. The returned scaler never
    scores worse than T = 1 on the fitting set when 1 lies in ``t_range``.
    """
    z = np.asarray(val_logits, dtype=np.float64)
    y = np.asarray(val_labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InvalidInput("validation set is empty")
    if objective not in ("nll", "ece"):
        raise InvalidInput(f"objective must be 'nll' or 'ece', got {objective!r}")
    lo, hi = t_range
    if not 0 < lo < hi:
        raise InvalidInput(f"bad temperature range {t_range}")
    f = _objective(z, y, objective, m_bins)

    grid = np.geomspace(lo, hi, grid_points)
    trace = [(float(t), f(float(t))) for t in grid]
    best = min(range(len(trace)), key=lambda i: trace[i][1])
    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, len(grid) - 1)])

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    trace += [(c, fc), (d, fd)]
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
            trace.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
            trace.append((d, fd))

    if lo <= 1.0 <= hi:
        trace.append((1.0, f(1.0)))
    t_best, v_best = min(trace, key=lambda tv: (tv[1], abs(math.log(tv[0]))))
    return TemperatureScaler(t=float(t_best), fit_nll=nll(PredictionSet(apply_temperature(z, t_best), y)),
                             objective=objective, search_trace=trace)
