"""Synthetic risk profiles, seeded Poisson sampling and Monte Carlo checks.

Random streams
--------------
Replicate ``r`` of a batch seeded with ``seed`` draws from its own
Philox4x64-10 stream keyed by the two 64-bit words ``(seed, r)`` with the
counter starting at zero; doubles are ``(x >> 11) * 2**-53`` of successive
64-bit outputs (numpy's ``Generator.random``). Each replicate first takes one
uniform per section. Sections with ``lambda < 10`` are sampled by CDF
inversion on that uniform, with the CDF built by the recurrence
``p_k = p_{k-1} * lambda / k`` from ``p_0 = exp(-lambda)``. Sections with
``lambda >= 10`` are then sampled in section order with Hoermann's PTRS
transformed rejection, consuming further uniform pairs from the same stream.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import threshold as _threshold

__all__ = [
    "RiskProfile",
    "ReplicateBatch",
    "PureCheckRow",
    "build_profile",
    "preset",
    "PRESETS",
    "INVERSION_LIMIT",
    "replicate_stream",
    "poisson_draws",
    "sample_counts",
    "mse_vs_truth",
    "pure_unbiasedness_experiment",
]

INVERSION_LIMIT = 10.0
SHAPES = ("constant", "linear-ramp", "sinusoid", "spike")


@dataclass(frozen=True, eq=False)
class RiskProfile:
    lam: np.ndarray
    segments: tuple = ()

    def __post_init__(self):
        lam = np.array(self.lam, dtype=np.float64, copy=True)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("risk profile must be a non-empty vector")
        if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
            raise ValueError("every expected count must be positive and finite")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def __len__(self):
        return self.lam.shape[0]


@dataclass(frozen=True, eq=False)
class ReplicateBatch:
    profile: RiskProfile
    seed: int
    replicates: int
    draws: np.ndarray = field(repr=False)


def _segment(length, shape, params):
    p = dict(params)
    i = np.arange(length)
    if shape == "constant":
        return np.full(length, float(p["level"]))
    if shape == "linear-ramp":
        return np.linspace(float(p["start"]), float(p["end"]), length)
    if shape == "sinusoid":
        lo, hi = float(p["low"]), float(p["high"])
        period = float(p["period"])
        phase = float(p.get("phase", 0.0))
        return (lo + hi) / 2 + (hi - lo) / 2 * np.sin(2 * np.pi * i / period + phase)
    if shape == "spike":
        out = np.full(length, float(p["base"]))
        out[int(p.get("at", length // 2))] = float(p["peak"])
        return out
    raise ValueError(f"unknown segment shape {shape!r}; expected one of {SHAPES}")


def build_profile(segments):
    """Concatenate segments ``{"length", "shape", "params"}`` into a profile.

    Shapes: constant(level), linear-ramp(start, end),
    sinusoid(low, high, period[, phase]), spike(base, peak[, at]).
    """
    segments = list(segments)
    if not segments:
        raise ValueError("profile needs at least one segment")
    parts = []
    for seg in segments:
        length = int(seg["length"])
        if length < 1:
            raise ValueError(f"segment length must be positive, got {seg['length']}")
        vals = _segment(length, seg["shape"], seg.get("params", {}))
        if not np.all(vals > 0):
            raise ValueError(f"segment {seg} produces nonpositive expected counts")
        parts.append(vals)
    frozen = tuple(json.loads(json.dumps(segments)))
    return RiskProfile(np.concatenate(parts), frozen)


# Our own construction with the features of a rural interstate crossing a
# city: long quiet stretches, a busy block with fast variation and one
# isolated very high-risk section inside it.
PRESETS = {
    "figure2": [
        {"length": 384, "shape": "constant", "params": {"level": 0.2}},
        {"length": 192, "shape": "sinusoid", "params": {"low": 1.0, "high": 6.0, "period": 32}},
        {"length": 1, "shape": "spike", "params": {"base": 25.0, "peak": 25.0}},
        {"length": 63, "shape": "sinusoid", "params": {"low": 1.0, "high": 6.0, "period": 32, "phase": 0.19634954084936207}},
        {"length": 384, "shape": "constant", "params": {"level": 0.2}},
    ],
    "pure256": [
        {"length": 64, "shape": "constant", "params": {"level": 2.0}},
        {"length": 64, "shape": "linear-ramp", "params": {"start": 2.0, "end": 10.0}},
        {"length": 32, "shape": "constant", "params": {"level": 10.0}},
        {"length": 96, "shape": "sinusoid", "params": {"low": 2.0, "high": 10.0, "period": 24}},
    ],
    "spike": [
        {"length": 256, "shape": "spike", "params": {"base": 0.5, "peak": 25.0}},
    ],
}

# where the preset puts its isolated spike, and which sections are "rural"
FIGURE2_SPIKE = 576
FIGURE2_RURAL = np.r_[0:384, 640:1024]


def preset(name):
    try:
        return build_profile(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def replicate_stream(seed, replicate):
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replicate)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _cdf_table(lam):
    """Poisson CDF rows F_k(lam) for k = 0..K-1, enough to exceed 1 - 1e-16."""
    kmax = int(math.ceil(INVERSION_LIMIT + 12 * math.sqrt(INVERSION_LIMIT) + 20))
    p = np.exp(-lam)
    cdf = np.empty((kmax, lam.shape[0]))
    acc = p.copy()
    cdf[0] = acc
    for k in range(1, kmax):
        p = p * lam / k
        acc = acc + p
        cdf[k] = acc
    return cdf


def _ptrs(lam, gen):
    """Hoermann (1993) PTRS transformed rejection, lam >= 10."""
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    while True:
        u = gen.random() - 0.5
        v = gen.random()
        us = 0.5 - abs(u)
        k = math.floor((2 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b) <= -lam + k * loglam - math.lgamma(k + 1):
            return k


def poisson_draws(lam, seed, replicates, first_replicate=0):
    """(replicates x n) Poisson counts for expected values ``lam``."""
    lam = np.asarray(lam, dtype=np.float64)
    n = lam.shape[0]
    small = lam < INVERSION_LIMIT
    gens = [replicate_stream(seed, first_replicate + r) for r in range(replicates)]
    u = np.empty((replicates, n))
    for r, g in enumerate(gens):
        u[r] = g.random(n)
    out = np.zeros((replicates, n), dtype=np.int64)
    if small.any():
        cdf = _cdf_table(lam[small])
        us = u[:, small]
        acc = np.zeros(us.shape, dtype=np.int64)
        for k in range(cdf.shape[0]):
            hit = us > cdf[k]
            if not hit.any():
                break
            acc += hit
        out[:, small] = acc
    big = np.flatnonzero(~small)
    if big.size:
        for r, g in enumerate(gens):
            for i in big:
                out[r, i] = _ptrs(float(lam[i]), g)
    return out


def sample_counts(profile, seed, replicates=1):
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    draws = poisson_draws(profile.lam, seed, replicates)
    draws.setflags(write=False)
    return ReplicateBatch(profile, int(seed), int(replicates), draws)


def mse_vs_truth(estimates, profile):
    lam = profile.lam if isinstance(profile, RiskProfile) else np.asarray(profile, dtype=np.float64)
    est = np.asarray(estimates, dtype=np.float64)
    if est.shape != lam.shape:
        raise ValueError(f"estimates have shape {est.shape}, profile has {lam.shape}")
    return float(np.mean((est - lam) ** 2))


@dataclass(frozen=True)
class PureCheckRow:
    threshold: float
    mean_pure: float
    se_pure: float
    mean_mse: float
    se_mse: float
    se_combined: float
    se_paired: float
    replicates: int

    @property
    def gap(self):
        return self.mean_pure - self.mean_mse

    @property
    def within(self):
        """|gap| <= 3 combined standard errors (None when undefined)."""
        if not math.isfinite(self.se_combined):
            return None
        return abs(self.gap) <= 3 * self.se_combined


def _mean_se(x):
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
    return m, se


def pure_unbiasedness_experiment(profile, th_grid, seed, replicates):
    """Compare PURE with the realised loss of the thresholded level-1 differences.

    For every replicate and threshold: PURE of the level-1 (sums, differences)
    against ``||phi(d) - d_lambda||**2`` where ``d_lambda`` are the level-1
    differences of the true profile. Standard errors are undefined (nan) for
    a single replicate.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    grid = np.asarray(th_grid, dtype=np.float64)
    lam = profile.lam
    d_lam = lam - np.roll(lam, -1)
    y = poisson_draws(lam, seed, replicates).astype(np.float64)
    s = y + np.roll(y, -1, axis=1)
    d = y - np.roll(y, -1, axis=1)
    pure = np.empty((replicates, grid.size))
    loss = np.empty((replicates, grid.size))
    for r in range(replicates):
        pure[r] = _threshold.pure_profile(s[r], d[r], grid)
    for j, th in enumerate(grid):
        phi = _threshold.apply_threshold(d, th)
        loss[:, j] = np.sum((phi - d_lam) ** 2, axis=1)
    rows = []
    for j, th in enumerate(grid):
        mp, sp = _mean_se(pure[:, j])
        ml, sl = _mean_se(loss[:, j])
        _, sd = _mean_se(pure[:, j] - loss[:, j])
        rows.append(PureCheckRow(float(th), mp, sp, ml, sl, math.hypot(sp, sl), sd, replicates))
    return rows
