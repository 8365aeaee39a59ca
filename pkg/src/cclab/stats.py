"""Statistical tests behind the Monte Carlo checks (thin wrappers over scipy.stats)."""

from __future__ import annotations

import numpy as np
from scipy import stats as _st

from .errors import ParameterError

MIN_SAMPLES = 100


def _need(n, what="samples"):
    if n < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} {what}, got {n}")


def ks_uniform(samples):
    """Kolmogorov-Smirnov p-value against Uniform[0, 1]."""
    x = np.asarray(samples, dtype=float).ravel()
    _need(x.size)
    return float(_st.kstest(x, "uniform").pvalue)


def chi2_goodness_of_fit(samples, probs):
    """Pearson chi-square p-value of integer samples against ``probs``; ``len(probs) - 1`` dof."""
    x = np.asarray(samples).ravel().astype(np.intp)
    _need(x.size)
    probs = np.asarray(probs, dtype=float)
    if x.min() < 0 or x.max() >= probs.size:
        raise ParameterError("sample outside the support of the reference law")
    observed = np.bincount(x, minlength=probs.size)
    return float(_st.chisquare(observed, probs * x.size).pvalue)


def chi2_independence(pairs):
    """Pearson chi-square p-value for independence of the two columns.

    Degrees of freedom ``(r - 1)(c - 1)`` over the observed categories;
    a column with a single observed value is trivially independent (p = 1).
    """
    pairs = np.asarray(pairs)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ParameterError("pairs must be an (m, 2) array")
    _need(pairs.shape[0], "pairs")
    _, a = np.unique(pairs[:, 0], return_inverse=True)
    _, b = np.unique(pairs[:, 1], return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a.ravel(), b.ravel()), 1)
    if min(table.shape) < 2:
        return 1.0
    return float(_st.chi2_contingency(table, correction=False).pvalue)


def autocorr(samples, lag=1):
    """Sample correlation between ``x[t]`` and ``x[t + lag]``."""
    x = np.asarray(samples, dtype=float).ravel()
    _need(x.size)
    if not 0 < lag < x.size:
        raise ParameterError(f"lag {lag} out of range")
    return correlation(x[:-lag], x[lag:])


def correlation(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    _need(a.size)
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
