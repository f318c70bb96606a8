"""Gaussian kernel density estimation for snapshot panels."""

import numpy as np
from scipy.stats import gaussian_kde


def silverman_bandwidth(samples):
    """Silverman's rule of thumb, robustified with the interquartile range."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples for a bandwidth")
    std = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) or std
    if spread <= 0:
        raise ValueError("degenerate sample: zero spread")
    return 0.9 * spread * x.size ** (-1.0 / 5.0)


def kde_curve(samples, bandwidth=None, grid_size=512):
    """Evaluate a Gaussian KDE on a grid covering the data plus tails.

    Returns (grid, density).  The grid extends four bandwidths beyond the
    sample range so the density integrates to 1 up to Gaussian tail mass
    (< 1e-4).  ``bandwidth`` overrides the Silverman default.
    """
    x = np.asarray(samples, dtype=float)
    h = float(bandwidth) if bandwidth is not None else silverman_bandwidth(x)
    if h <= 0:
        raise ValueError("bandwidth must be > 0")
    # scipy scales its factor by the sample std, so convert to its units
    kde = gaussian_kde(x, bw_method=h / x.std(ddof=1))
    grid = np.linspace(x.min() - 4 * h, x.max() + 4 * h, grid_size)
    return grid, kde(grid)
