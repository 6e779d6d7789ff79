"""Thresholding rules and Poisson unbiased risk (PURE) threshold selection."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _backend

__all__ = [
    "ThresholdKind",
    "ThresholdSet",
    "apply_threshold",
    "pure_risk",
    "pure_profile",
    "threshold_grid",
    "optimal_threshold",
    "DEFAULT_GRID_SIZE",
]

DEFAULT_GRID_SIZE = 40


class ThresholdKind(str, Enum):
    HARD = "hard"
    SOFT = "soft"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ThresholdSet:
    """Selected threshold per level plus the PURE profile that chose it.

    ``pure_profiles[l]`` is a (grid_size, 2) array of (threshold, PURE).
    """

    per_level_threshold: np.ndarray
    grid_size: int = DEFAULT_GRID_SIZE
    pure_profiles: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        th = np.array(self.per_level_threshold, dtype=np.float64)
        if np.any(th < 0):
            raise ValueError("thresholds must be nonnegative")
        th.setflags(write=False)
        object.__setattr__(self, "per_level_threshold", th)

    @property
    def levels(self):
        return self.per_level_threshold.shape[0]


def apply_threshold(d, th, kind=ThresholdKind.CONTINUOUS):
    """Shrink differences ``d`` towards zero at threshold ``th``.

    hard: keep ``d`` when ``|d| > th``; soft: ``sign(d) max(|d| - th, 0)``;
    continuous: ``sign(d) max(|d| - th**2/|d|, 0)``, the non-negative
    garrote, which tends to the hard rule as ``|d|/th`` grows. Scalars in,
    scalars out.
    """
    if th < 0:
        raise ValueError(f"threshold must be nonnegative, got {th}")
    kind = ThresholdKind(kind)
    scalar = np.ndim(d) == 0
    x = np.asarray(d, dtype=np.float64)
    if kind is ThresholdKind.CONTINUOUS:
        out = _backend.kernels.garrote(x, float(th))
    elif kind is ThresholdKind.HARD:
        out = np.where(np.abs(x) > th, x, 0.0)
    else:
        out = np.sign(x) * np.maximum(np.abs(x) - th, 0.0)
    return float(out) if scalar else out


def _check_sd(s, d):
    s = np.asarray(s, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if s.shape != d.shape or s.ndim != 1:
        raise ValueError(f"sums and differences must be equal-length vectors, got {s.shape} and {d.shape}")
    return s, d


def pure_profile(s, d, thresholds, *, backend=None):
    """PURE of the continuous rule at every threshold in ``thresholds``."""
    s, d = _check_sd(s, d)
    grid = np.asarray(thresholds, dtype=np.float64).ravel()
    return _backend.get(backend).pure_profile(s, d, grid)


def pure_risk(s, d, th):
    """Unbiased estimate of ``||phi(d) - E d||^2`` for Poisson sums ``s`` and differences ``d``.

    With ``F(x) = phi(x) - x``::

        sum(s + F(d)**2 + 2 d F(d) - (s + d) F(d - 1) + (s - d) F(d + 1))
    """
    if th < 0:
        raise ValueError(f"threshold must be nonnegative, got {th}")
    return float(pure_profile(s, d, [th])[0])


def threshold_grid(s, grid_size=DEFAULT_GRID_SIZE):
    """``grid_size`` equally spaced thresholds from 0 to ``max(sqrt(s)) * sqrt(8 ln n)``."""
    s = np.asarray(s, dtype=np.float64)
    if grid_size < 2:
        raise ValueError(f"grid_size must be at least 2, got {grid_size}")
    top = np.max(np.sqrt(s)) * np.sqrt(8 * np.log(s.shape[0]))
    return np.linspace(0, top, grid_size)


def optimal_threshold(s, d, grid_size=DEFAULT_GRID_SIZE, *, backend=None):
    """Grid threshold with the lowest PURE; the first one wins ties.

    Returns ``(th, profile)`` with ``profile`` a (grid_size, 2) array of
    (threshold, PURE) rows.
    """
    s, d = _check_sd(s, d)
    if s.shape[0] < 1:
        raise ValueError("need at least one difference")
    grid = threshold_grid(s, grid_size)
    values = pure_profile(s, d, grid, backend=backend)
    best = int(np.argmin(values))
    return float(grid[best]), np.column_stack((grid, values))
