"""Sample-mean estimators with standard errors.

``np.mean`` reduces contiguous float arrays by pairwise summation, so the
result depends only on the values and their order, never on how the paths
were split across workers.
"""

from __future__ import annotations

import numpy as np


def mean_se(values, axis: int = 0):
    """Sample mean and its standard error along ``axis``."""
    x = np.ascontiguousarray(np.moveaxis(np.asarray(values, dtype=float), axis, 0))
    n = x.shape[0]
    if n == 0:
        raise ValueError("no samples")
    m = np.mean(x, axis=0)
    se = np.std(x, axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(m)
    if np.ndim(m) == 0:
        return float(m), float(se)
    return m, se


def covariance_se(x, y):
    """Sample covariance of paired draws and a delta-method standard error.

    The SE treats the centred products as i.i.d., which is exact to leading
    order in ``1/n`` (the fourth-moment formula).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    prod = (x - x.mean()) * (y - y.mean())
    cov = prod.sum() / (n - 1)
    se = np.std(prod, ddof=1) / np.sqrt(n)
    return float(cov), float(se)


def correlation_se(x, y):
    """Sample correlation with the large-sample SE ``(1 - r^2) / sqrt(n)``
    corrected for non-Gaussian data by the delta method."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.mean(xc * xc)
    syy = np.mean(yc * yc)
    sxy = np.mean(xc * yc)
    r = sxy / np.sqrt(sxx * syy)
    # influence function of the correlation coefficient
    u = xc / np.sqrt(sxx)
    w = yc / np.sqrt(syy)
    infl = u * w - 0.5 * r * (u * u + w * w)
    se = np.std(infl, ddof=1) / np.sqrt(n)
    return float(r), float(se)
