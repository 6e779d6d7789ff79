"""Circular, undecimated, unnormalized Haar transform.

Level ``l`` (1-based) pairs every position ``i`` with ``i + 2**(l-1)``
(mod n) and stores the pair's sum and difference::

    sums[:, l] = sums[:, l-1] + roll_left(sums[:, l-1], 2**(l-1))
    diffs[:, l] = sums[:, l-1] - roll_left(sums[:, l-1], 2**(l-1))

with the level-0 sums being the counts themselves. Columns are 0-based in
the arrays, so column ``l-1`` holds level ``l``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import _backend

__all__ = [
    "MultiresDecomposition",
    "max_levels",
    "circular_shift",
    "decompose",
    "reconstruct",
    "write_decomposition_csv",
]


@dataclass(frozen=True, eq=False)
class MultiresDecomposition:
    sums: np.ndarray
    diffs: np.ndarray

    @property
    def n(self):
        return self.sums.shape[0]

    @property
    def levels(self):
        return self.sums.shape[1]

    @property
    def coarse_sums(self):
        return self.sums[:, -1]


def max_levels(n):
    """Number of dyadic levels available for ``n`` sections, ``floor(log2 n)``."""
    n = int(n)
    if n < 2:
        raise ValueError(f"need at least 2 sections to decompose, got {n}")
    return n.bit_length() - 1


def circular_shift(v, k):
    """Rotate ``v`` right by ``k`` (left when ``k`` is negative).

    Same index arithmetic as a MATLAB ``x([end-k+1:end, 1:end-k])`` rotation;
    ``|k|`` may exceed ``len(v)``, in which case it wraps.
    """
    v = np.asarray(v)
    return _backend.get("python").rotate(v, int(k))


def decompose(counts, levels=None, *, backend=None):
    """Sums and differences at every level, as n x levels matrices."""
    y = np.asarray(counts, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("counts must be 1-d")
    top = max_levels(y.shape[0])
    if levels is None:
        levels = top
    if int(levels) != levels or not 1 <= levels <= top:
        raise ValueError(f"levels must be in [1, {top}] for n={y.shape[0]}, got {levels}")
    sums, diffs = _backend.get(backend).decompose(y, int(levels))
    sums.setflags(write=False)
    diffs.setflags(write=False)
    return MultiresDecomposition(sums, diffs)


def reconstruct(coarse_sums, t_diffs, clamp=True, *, backend=None):
    """Invert :func:`decompose` from the coarsest sums and (thresholded) differences.

    Each level averages the two circular estimates of the finer sums. With
    ``clamp`` the estimate is floored at zero after every step except the
    first (coarsest) one.
    """
    coarse = np.asarray(coarse_sums, dtype=np.float64)
    td = np.asarray(t_diffs, dtype=np.float64)
    if coarse.ndim != 1 or td.ndim != 2 or td.shape[0] != coarse.shape[0] or td.shape[1] < 1:
        raise ValueError(
            f"dimension mismatch: coarse sums {coarse.shape}, differences {td.shape}"
        )
    if td.shape[1] > max_levels(coarse.shape[0]):
        raise ValueError(f"{td.shape[1]} levels is too many for n={coarse.shape[0]}")
    return _backend.get(backend).reconstruct(coarse, td, bool(clamp))


def write_decomposition_csv(decomp, path, header_lines=()):
    """Debug dump: one row per section with sum_/diff_ columns per level."""
    L = decomp.levels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["section"] + [f"sum_level_{l}" for l in range(1, L + 1)]
            + [f"diff_level_{l}" for l in range(1, L + 1)]
        )
        for i in range(decomp.n):
            w.writerow([i] + [repr(float(v)) for v in decomp.sums[i]] + [repr(float(v)) for v in decomp.diffs[i]])
