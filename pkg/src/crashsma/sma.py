"""Spatial multiresolution crash risk estimation.

Counts are decomposed with the circular Haar transform, each level's
differences are shrunk with the continuous rule at the PURE-optimal
threshold, and the thresholded decomposition is inverted. Wherever a run of
fine-level differences is zeroed the estimate is a plain average over the
corresponding dyadic window, so the procedure acts like a moving average
whose bandwidth varies along the road.
"""

import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .data import SectionSeries
from .haar import decompose, max_levels, reconstruct
from .threshold import DEFAULT_GRID_SIZE, ThresholdSet, optimal_threshold

__all__ = [
    "RiskEstimate",
    "smooth_counts",
    "sma_estimate",
    "bandwidth_levels",
    "bandwidth_map",
    "bandwidth_histogram",
]


@dataclass(frozen=True, eq=False)
class RiskEstimate:
    estimates: np.ndarray
    bandwidth_miles: np.ndarray
    thresholds: ThresholdSet
    source_series: SectionSeries = field(repr=False)
    t_diffs: np.ndarray = field(default=None, repr=False)

    @property
    def levels(self):
        return self.thresholds.levels


def smooth_counts(counts, levels=None, grid_size=DEFAULT_GRID_SIZE, clamp=True, *, thresholds=None, backend=None):
    """Core estimator on a bare count vector.

    ``thresholds`` (one per level) bypasses the PURE search. Returns
    ``(estimates, t_diffs, ThresholdSet)``.
    """
    kern = _backend.get(backend)
    decomp = decompose(counts, levels, backend=backend)
    L = decomp.levels
    t_diffs = np.empty_like(decomp.diffs)
    ths = np.empty(L)
    profiles = []
    if thresholds is not None and len(thresholds) != L:
        raise ValueError(f"expected {L} thresholds, got {len(thresholds)}")
    for lev in range(L):
        if thresholds is None:
            th, prof = optimal_threshold(decomp.sums[:, lev], decomp.diffs[:, lev], grid_size, backend=backend)
        else:
            th, prof = float(thresholds[lev]), None
        ths[lev] = th
        profiles.append(prof)
        t_diffs[:, lev] = kern.garrote(decomp.diffs[:, lev], th)
    est = reconstruct(decomp.coarse_sums, t_diffs, clamp, backend=backend)
    return est, t_diffs, ThresholdSet(ths, grid_size, profiles)


def sma_estimate(series, levels=None, grid_size=DEFAULT_GRID_SIZE, clamp=True, *, backend=None):
    """Estimate expected crashes per section for one route/direction series.

    ``levels`` defaults to ``floor(log2 n)``. A single-section series is
    returned unchanged (with a warning) since there is nothing to pair it
    with. ``clamp=False`` skips the zero floor and exists for testing mass
    conservation.
    """
    if not isinstance(series, SectionSeries):
        series = SectionSeries("", "", 1.0, 0.0, series)
    n = len(series)
    if n == 1:
        warnings.warn(
            f"series {series.key} has a single section; returning the raw count",
            RuntimeWarning,
            stacklevel=2,
        )
        return RiskEstimate(
            series.counts.astype(np.float64),
            np.array([series.section_length]),
            ThresholdSet(np.zeros(0), grid_size, []),
            series,
            np.zeros((1, 0)),
        )
    est, t_diffs, ths = smooth_counts(series.counts, levels, grid_size, clamp, backend=backend)
    bw = bandwidth_map(t_diffs, series.section_length)
    return RiskEstimate(est, bw, ths, series, t_diffs)


def bandwidth_levels(thresholded):
    """Per-section count ``k`` of consecutive finest levels with zeroed differences.

    At level ``l`` section ``i`` draws on the differences at ``i`` and at
    ``i - 2**(l-1)`` (mod n); both must be zero for the level to count.
    """
    td = np.asarray(thresholded)
    n, L = td.shape
    k = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    for lev in range(L):
        z = td[:, lev] == 0
        both = z & np.roll(z, 1 << lev)
        alive &= both
        k += alive
    return k


def bandwidth_map(thresholded, section_length):
    """Effective smoothing window in miles, ``section_length * 2**k`` per section."""
    return section_length * np.exp2(bandwidth_levels(thresholded))


def bandwidth_histogram(estimates):
    """Pooled share of sections at each bandwidth, as sorted (miles, proportion) rows."""
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    counts = Counter()
    for e in estimates:
        counts.update(np.round(e.bandwidth_miles, 9).tolist())
    total = sum(counts.values())
    return [(bw, counts[bw] / total) for bw in sorted(counts)]


def series_max_levels(series):
    return max_levels(len(series)) if len(series) >= 2 else 0
