"""Pure-numpy fallbacks for the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def bin_stats(conf, correct, m_bins):
    """Assign confidences to ``(b/M, (b+1)/M]`` bins and accumulate per-bin sums.

    Returns ``(counts, conf_sum, correct_sum, assignment)`` with 0-based bins.
    Confidences at or below 0 land in the first bin, above 1 in the last.
    """
    conf = np.ascontiguousarray(conf, dtype=np.float64)
    correct = np.ascontiguousarray(correct, dtype=np.float64)
    m = float(m_bins)
    b = np.clip(np.ceil(conf * m).astype(np.int64) - 1, 0, m_bins - 1)
    # p * M rounding can land one bin off the (b/M, (b+1)/M] rule
    for _ in range(2):
        down = (b > 0) & (conf <= b / m)
        b[down] -= 1
        up = (b < m_bins - 1) & (conf > (b + 1) / m)
        b[up] += 1
    counts = np.bincount(b, minlength=m_bins).astype(np.int64)
    conf_sum = np.bincount(b, weights=conf, minlength=m_bins)
    corr_sum = np.bincount(b, weights=correct, minlength=m_bins)
    return counts, conf_sum, corr_sum, b


def mmce_weighted(conf, correct, width):
    """Weighted MMCE^2 with a Laplacian kernel, and its gradient w.r.t. ``conf``.

    Uses the signed-weight form ``sum_ij s_i s_j k(p_i, p_j)`` where
    ``s_i = (c_i - p_i) / count(c_i)``.
    """
    conf = np.ascontiguousarray(conf, dtype=np.float64)
    correct = np.ascontiguousarray(correct, dtype=np.float64) > 0.5
    n_correct = float(correct.sum())
    n_wrong = conf.shape[0] - n_correct
    s = np.where(correct, (1.0 - conf) / max(n_correct, 1.0), -conf / max(n_wrong, 1.0))
    ds = np.where(correct, -1.0 / max(n_correct, 1.0), -1.0 / max(n_wrong, 1.0))
    diff = conf[:, None] - conf[None, :]
    k = np.exp(-np.abs(diff) / width)
    ks = k @ s
    dk = (-np.sign(diff) / width) * k
    total = float(s @ ks)
    grad = 2.0 * ds * ks + 2.0 * s * (dk @ s)
    return total, grad
