"""Linearly referenced crash-count data: containers, CSV ingestion, aggregation."""

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SectionSeries",
    "NetworkDataset",
    "SchemaError",
    "CountValidationError",
    "SpacingError",
    "load_crash_csv",
    "write_crash_csv",
    "aggregate",
    "moving_average",
    "CANONICAL_COLUMNS",
    "SPACING_TOL",
]

CANONICAL_COLUMNS = ("route_id", "direction", "milepost", "count", "period")
SPACING_TOL = 1e-6  # miles


class SchemaError(ValueError):
    """A required column is missing from the input."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing required column {column!r}")


class CountValidationError(ValueError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class SpacingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SectionSeries:
    """Crash counts of one route/direction/period at a fixed section length.

    ``partial_last`` marks a trailing section that covers less than
    ``section_length`` (left over by :func:`aggregate`).
    """

    route_id: str
    direction: str
    section_length: float
    start_milepost: float
    counts: np.ndarray
    period_label: str = ""
    partial_last: bool = False

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a non-empty 1-d vector")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if not (self.section_length > 0):
            raise ValueError("section_length must be positive")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return self.counts.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SectionSeries):
            return NotImplemented
        return (
            self.key == other.key
            and self.section_length == other.section_length
            and self.start_milepost == other.start_milepost
            and self.partial_last == other.partial_last
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None

    @property
    def key(self):
        return (self.route_id, self.direction, self.period_label)

    @property
    def mileposts(self):
        return self.start_milepost + self.section_length * np.arange(len(self))


@dataclass(frozen=True, eq=False)
class NetworkDataset:
    """Series keyed by ``(route_id, direction, period_label)`` plus aligned covariates.

    ``covariates[key]`` maps covariate name to a float vector with one value
    per section of ``series[key]``.
    """

    series: "OrderedDict[tuple, SectionSeries]"
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        ordered = OrderedDict(sorted(self.series.items(), key=lambda kv: kv[0]))
        for key, s in ordered.items():
            if s.key != key:
                raise ValueError(f"series keyed {key} reports key {s.key}")
        covs = {}
        for key, table in self.covariates.items():
            if key not in ordered:
                raise ValueError(f"covariates for unknown series {key}")
            n = len(ordered[key])
            frozen = {}
            for name, values in table.items():
                arr = np.array(values, dtype=np.float64, copy=True)
                if arr.shape != (n,):
                    raise ValueError(
                        f"covariate {name!r} of {key} has {arr.size} values for {n} sections"
                    )
                arr.setflags(write=False)
                frozen[name] = arr
            covs[key] = frozen
        object.__setattr__(self, "series", ordered)
        object.__setattr__(self, "covariates", covs)

    def __eq__(self, other):
        if not isinstance(other, NetworkDataset):
            return NotImplemented
        if list(self.series) != list(other.series):
            return False
        if any(self.series[k] != other.series[k] for k in self.series):
            return False
        if set(self.covariates) != set(other.covariates):
            return False
        for k, table in self.covariates.items():
            o = other.covariates[k]
            if set(table) != set(o) or any(not np.array_equal(table[c], o[c]) for c in table):
                return False
        return True

    __hash__ = None

    @property
    def periods(self):
        return sorted({k[2] for k in self.series})

    @property
    def covariate_names(self):
        names = set()
        for table in self.covariates.values():
            names.update(table)
        return sorted(names)

    def by_period(self, period):
        """Series of one period, ordered by (route_id, direction)."""
        return [s for k, s in self.series.items() if k[2] == period]

    def n_sections(self, period=None):
        return sum(len(s) for k, s in self.series.items() if period is None or k[2] == period)


def _parse_count(raw, row):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise CountValidationError(row, f"count {raw!r} is not a number") from None
    if not math.isfinite(value) or value != math.floor(value):
        raise CountValidationError(row, f"count {raw!r} is not an integer")
    if value < 0:
        raise CountValidationError(row, f"count {raw!r} is negative")
    return int(value)


def _resolve_spacing(mp, key, fill_gaps_zero):
    """Return (start, section_length, slot index per milepost)."""
    start = round(float(mp[0]), 6)
    if len(mp) == 1:
        return start, None, np.zeros(1, dtype=np.int64)
    steps = np.diff(mp)
    if np.any(steps <= SPACING_TOL):
        raise SpacingError(f"{key}: duplicate milepost")
    base = float(steps.min())
    mult = np.rint(steps / base)
    if np.any(np.abs(steps - mult * base) > SPACING_TOL):
        raise SpacingError(f"{key}: milepost spacing is not uniform")
    if np.any(mult > 1) and not fill_gaps_zero:
        at = float(mp[1:][mult > 1][0])
        raise SpacingError(f"{key}: gap in milepost sequence before {at}; use fill_gaps_zero")
    slots = np.concatenate(([0], np.cumsum(mult))).astype(np.int64)
    length = round(float(mp[-1] - mp[0]) / float(slots[-1]), 6)
    return start, length, slots


COMBINED_DIRECTION = "both"


def load_crash_csv(path, schema=None, *, fill_gaps_zero=False, default_section_length=0.1,
                   combine_directions=False):
    """Read a crash CSV into a :class:`NetworkDataset`.

    ``schema`` maps canonical column names (route_id, direction, milepost,
    count, period) to the header names used by the file. Every other column
    is read as a numeric covariate. Lines starting with ``#`` are skipped.
    Single-section series get ``default_section_length``.

    With ``combine_directions`` both directions of a route become one series
    (direction ``"both"``): counts at the same milepost are added and
    covariates averaged.
    """
    schema = dict(schema or {})
    colmap = {c: schema.get(c, c) for c in CANONICAL_COLUMNS}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.DictReader(lines)
        header = reader.fieldnames or []
        for canon, col in colmap.items():
            if col not in header:
                raise SchemaError(col, f"missing required column {col!r} (for {canon})")
        cov_cols = [c for c in header if c not in colmap.values()]
        groups = {}
        for rowno, row in enumerate(reader, start=2):
            direction = COMBINED_DIRECTION if combine_directions else row[colmap["direction"]]
            key = (row[colmap["route_id"]], direction, row[colmap["period"]])
            try:
                mp = float(row[colmap["milepost"]])
            except ValueError:
                raise CountValidationError(rowno, f"milepost {row[colmap['milepost']]!r} is not a number") from None
            count = _parse_count(row[colmap["count"]], rowno)
            covs = []
            for c in cov_cols:
                try:
                    covs.append(float(row[c]))
                except ValueError:
                    raise CountValidationError(rowno, f"covariate {c}={row[c]!r} is not numeric") from None
            groups.setdefault(key, []).append((mp, count, covs))

    series = {}
    covariates = {}
    for key, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        if combine_directions:
            rows = _merge_same_milepost(rows)
        mp = np.array([r[0] for r in rows])
        start, length, slots = _resolve_spacing(mp, key, fill_gaps_zero)
        if length is None:
            length = default_section_length
        counts = np.zeros(slots[-1] + 1, dtype=np.int64)
        counts[slots] = [r[1] for r in rows]
        series[key] = SectionSeries(key[0], key[1], length, start, counts, key[2])
        if cov_cols:
            table = {}
            for j, c in enumerate(cov_cols):
                vals = np.zeros(slots[-1] + 1)
                vals[slots] = [r[2][j] for r in rows]
                table[c] = vals
            covariates[key] = table
    return NetworkDataset(series, covariates)


def _merge_same_milepost(rows):
    out = []
    i = 0
    while i < len(rows):
        j = i
        while j < len(rows) and rows[j][0] == rows[i][0]:
            j += 1
        block = rows[i:j]
        covs = np.mean([r[2] for r in block], axis=0).tolist() if block[0][2] else []
        out.append((rows[i][0], sum(r[1] for r in block), covs))
        i = j
    return out


def _fmt_milepost(x):
    return f"{x:.6f}"


def write_crash_csv(dataset, path, extra_columns=None, header_lines=()):
    """Write ``dataset`` in the canonical schema.

    ``extra_columns`` maps column name to ``{series_key: vector}`` and is
    appended after the covariates. ``header_lines`` are emitted as ``#``
    comments before the header row.
    """
    extra_columns = extra_columns or {}
    cov_names = dataset.covariate_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(CANONICAL_COLUMNS) + cov_names + list(extra_columns))
        for key, s in dataset.series.items():
            covs = dataset.covariates.get(key, {})
            mps = s.mileposts
            for i in range(len(s)):
                row = [s.route_id, s.direction, _fmt_milepost(mps[i]), int(s.counts[i]), s.period_label]
                row += [repr(float(covs[c][i])) if c in covs else "" for c in cov_names]
                row += [_fmt_value(extra_columns[c][key][i]) for c in extra_columns]
                w.writerow(row)


def _fmt_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def aggregate(series, factor):
    """Sum non-overlapping blocks of ``factor`` sections.

    A trailing block shorter than ``factor`` is kept as a partial sum and
    flagged through ``partial_last``.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    c = series.counts
    n = len(c)
    full = n // factor
    sums = c[: full * factor].reshape(full, factor).sum(axis=1)
    rem = n - full * factor
    if rem:
        sums = np.append(sums, c[full * factor:].sum())
    return SectionSeries(
        series.route_id,
        series.direction,
        series.section_length * factor,
        series.start_milepost,
        sums,
        series.period_label,
        partial_last=bool(rem) or (series.partial_last and factor == 1),
    )


def moving_average(series, window):
    """Centered rectangular-window mean with circular wrap-around."""
    counts = series.counts if isinstance(series, SectionSeries) else np.asarray(series)
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd positive integer, got {window!r}")
    n = len(counts)
    if window > n:
        raise ValueError(f"window {window} exceeds series length {n}")
    h = window // 2
    y = np.asarray(counts, dtype=np.float64)
    padded = np.concatenate((y[n - h:], y, y[:h])) if h else y
    return np.convolve(padded, np.ones(window), mode="valid") / window
