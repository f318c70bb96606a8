"""Empirical measures on the nonnegative half-line.

An EmpiricalMeasure is the uniform probability measure on a finite sample
of reserve values.  It supports moments, threshold fractions, and the
exact one-dimensional p-Wasserstein distance via the quantile coupling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyMeasureError(ValueError):
    """Statistic requested on a measure with no atoms."""


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Sorted nonnegative samples with uniform weights.  May be empty."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if arr.size and np.any(arr < 0):
            raise ValueError("samples must be nonnegative")
        if arr.size and np.any(np.isnan(arr)):
            raise ValueError("samples must not contain NaN")
        arr = np.sort(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.size

    @property
    def empty(self) -> bool:
        return self.samples.size == 0

    def mean(self) -> float:
        if self.empty:
            raise EmptyMeasureError("mean of empty measure")
        return float(self.samples.mean())

    def integrate(self, f) -> float:
        """(nu, f) = average of f over the atoms."""
        if self.empty:
            raise EmptyMeasureError("integral against empty measure")
        return float(np.mean(f(self.samples)))


def measure_stats(m: EmpiricalMeasure, p: float) -> tuple[float, float]:
    """Return (mean, p-th raw moment) of the measure.

    The moment is (nu, f_p) with f_p(x) = x^p; at p = 1 the two outputs
    coincide exactly.
    """
    if p <= 0:
        raise ValueError("p must be > 0")
    if m.empty:
        raise EmptyMeasureError("stats of empty measure")
    mean = float(m.samples.mean())
    if p == 1:
        return mean, mean
    return mean, float(np.mean(m.samples**p))


def fraction_below(m: EmpiricalMeasure, D: float) -> float:
    """Fraction of atoms with value <= D (systemic-risk indicator)."""
    if D <= 0:
        raise ValueError("threshold D must be > 0")
    if m.empty:
        raise EmptyMeasureError("fraction_below on empty measure")
    return float(np.count_nonzero(m.samples <= D)) / len(m)


def wasserstein_p(a: EmpiricalMeasure, b: EmpiricalMeasure, p: float = 2.0) -> float:
    """Exact W_p between two empirical measures via the quantile coupling.

    For equal sample counts this reduces to sorted matching.  For unequal
    counts we integrate |F_a^{-1}(u) - F_b^{-1}(u)|^p over the merged
    quantile grid {i/n} U {j/m}: the quantile functions are piecewise
    constant, so the integral is an exact finite sum.
    """
    if p < 1:
        raise ValueError("wasserstein_p requires p >= 1")
    if a.empty or b.empty:
        raise EmptyMeasureError("Wasserstein distance needs nonempty measures")
    xa, xb = a.samples, b.samples
    n, m = xa.size, xb.size
    if n == m:
        cost = np.mean(np.abs(xa - xb) ** p)
        return float(cost ** (1.0 / p))
    edges = np.union1d(np.arange(1, n) / n, np.arange(1, m) / m)
    edges = np.concatenate(([0.0], edges, [1.0]))
    widths = np.diff(edges)
    mids = (edges[:-1] + edges[1:]) / 2
    ia = np.minimum((mids * n).astype(int), n - 1)
    ib = np.minimum((mids * m).astype(int), m - 1)
    cost = float(np.sum(widths * np.abs(xa[ia] - xb[ib]) ** p))
    return cost ** (1.0 / p)
