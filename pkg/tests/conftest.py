"""Shared helpers: synthetic histograms, curves, and the valley metric."""

from pathlib import Path

import numpy as np
import pytest

from incomefit import models
from incomefit.empirical import EmpiricalCurve, IncomeHistogram

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# where real Lakner-Milanovic style data would live, one <year>.csv per year
MILANOVIC_DATA = Path(__file__).resolve().parent.parent / "data" / "milanovic"

STANDARD_EDGES = np.geomspace(30.0, 60000.0, 61)


def binned_histogram(parts, edges=STANDARD_EDGES, label="synthetic"):
    """Histogram whose masses are exact CDF differences of the given models."""
    edges = np.asarray(edges, dtype=float)
    mass = np.zeros(edges.size - 1)
    for model in parts:
        mass += models.cdf(model, edges[1:]) - models.cdf(model, edges[:-1])
    return IncomeHistogram(edges, mass, label=label)


def exact_curve(model, kind, n_points=60, lo=30.0, hi=60000.0):
    """Noise-free curve sampled straight from the model, no binning."""
    x = np.geomspace(lo, hi, n_points)
    y = models.pdf(model, x) if kind == "pdf" else models.ccdf(model, x)
    return EmpiricalCurve(x, y, kind)


def smooth5(y):
    padded = np.concatenate((y[:2][::-1], y, y[-2:][::-1]))
    return np.convolve(padded, np.full(5, 0.2), mode="valid")


def valley_ratio(curve):
    """Valley depth over the smaller of the two main peaks, or None.

    Computed on a 5-point smoothed copy of the ordinates; lower means a more
    pronounced valley.
    """
    s = smooth5(curve.y)
    peaks = [i for i in range(1, s.size - 1) if s[i] >= s[i - 1] and s[i] >= s[i + 1]]
    if len(peaks) < 2:
        return None
    left, right = sorted(sorted(peaks, key=lambda i: s[i], reverse=True)[:2])
    if right - left < 2:
        return None
    interior = np.arange(left + 1, right)
    bottom = interior[np.argmin(s[interior])]
    return float(s[bottom] / min(s[left], s[right]))


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path
