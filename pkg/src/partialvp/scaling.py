"""Log-log power-law fits."""

from __future__ import annotations

import numpy as np


def fit_exponent(points):
    """Ordinary least squares of ``log(value)`` on ``log(N)``.

    Parameters
    ----------
    points : iterable of (N, value)
        At least three points with positive values and at least two distinct N.

    Returns
    -------
    slope, r2 : float
        Fitted exponent and coefficient of determination (1 for constant data).
    """
    pts = [(float(n), float(val)) for n, val in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    n, val = np.array(pts).T
    if np.any(n <= 0):
        raise ValueError("N values must be positive")
    if np.any(~(val > 0)):
        raise ValueError("values must be positive for a log-log fit")
    if len(np.unique(n)) < 2:
        raise ValueError("need distinct N")
    lx, ly = np.log(n), np.log(val)
    lx_c = lx - lx.mean()
    ly_c = ly - ly.mean()
    slope = float(np.dot(lx_c, ly_c) / np.dot(lx_c, lx_c))
    ss_tot = float(np.dot(ly_c, ly_c))
    resid = ly_c - slope * lx_c
    ss_res = float(np.dot(resid, resid))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return slope, r2
