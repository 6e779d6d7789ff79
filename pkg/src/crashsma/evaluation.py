"""Hotspot identification and prediction tests across two periods.

SCT (segment consistency), MCT (method consistency), FP (false positive
rate against a reference model from an independent period) and MSPE (mean
square prediction error). The top-alpha set holds ``ceil(alpha * N)``
sections; ties at the cutoff go to the smaller section index.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AlignmentError",
    "MethodEstimates",
    "EvaluationReport",
    "DEFAULT_ALPHAS",
    "TIE_BREAK",
    "top_count",
    "top_alpha",
    "sct",
    "mct",
    "fp_rate",
    "mspe",
    "evaluate",
]

DEFAULT_ALPHAS = (0.01, 0.025, 0.05, 0.10)
TIE_BREAK = "descending estimate, ties to the smaller section index; set size ceil(alpha*N)"


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MethodEstimates:
    """One method's per-section estimates for one period.

    ``sections`` identifies each position (e.g. (route, direction, index))
    and is what alignment checks compare.
    """

    method_name: str
    period: str
    estimates: np.ndarray
    sections: tuple = None

    def __post_init__(self):
        est = np.array(self.estimates, dtype=np.float64, copy=True)
        if est.ndim != 1:
            raise ValueError("estimates must be a vector")
        est.setflags(write=False)
        object.__setattr__(self, "estimates", est)
        if self.sections is not None and len(self.sections) != est.shape[0]:
            raise ValueError("sections and estimates differ in length")

    def __len__(self):
        return self.estimates.shape[0]


def _values(x):
    return x.estimates if isinstance(x, MethodEstimates) else np.asarray(x, dtype=np.float64)


def _aligned(a, b):
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise AlignmentError(f"{va.shape[0]} sections vs {vb.shape[0]} sections")
    sa = getattr(a, "sections", None)
    sb = getattr(b, "sections", None)
    if sa is not None and sb is not None and sa != sb:
        raise AlignmentError("section identifiers differ between inputs")
    return va, vb


def top_count(n, alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    # round first so 0.07 * 100 gives 7, not 8
    return max(1, math.ceil(round(alpha * n, 9)))


def top_alpha(estimates, alpha):
    """Indices (ascending) of the ``ceil(alpha N)`` highest estimates."""
    v = _values(estimates)
    if v.size == 0:
        raise ValueError("no estimates")
    k = top_count(v.size, alpha)
    order = np.argsort(-v, kind="stable")
    return np.sort(order[:k])


def sct(estimates_p1, counts_p2, alpha):
    """Mean next-period count over the sections flagged in period 1."""
    est, nxt = _aligned(estimates_p1, counts_p2)
    return float(np.mean(nxt[top_alpha(est, alpha)]))


def mct(estimates_p1, estimates_p2, alpha):
    """Share of the period-1 hotspots that are hotspots again in period 2."""
    a, b = _aligned(estimates_p1, estimates_p2)
    s1 = top_alpha(a, alpha)
    s2 = top_alpha(b, alpha)
    return len(np.intersect1d(s1, s2, assume_unique=True)) / len(s1)


def fp_rate(method_p1, reference_p2, alpha):
    """Share of the method's hotspots that the reference does not flag."""
    a, b = _aligned(method_p1, reference_p2)
    flagged = top_alpha(a, alpha)
    ref = top_alpha(b, alpha)
    return len(np.setdiff1d(flagged, ref, assume_unique=True)) / len(flagged)


def mspe(estimates_p1, counts_p2):
    est, nxt = _aligned(estimates_p1, counts_p2)
    return float(np.mean((nxt - est) ** 2))


@dataclass
class EvaluationReport:
    """Statistics keyed by method (and alpha / reference where relevant).

    ``sct[method][alpha]``, ``mct[method][alpha]``,
    ``fp[reference][method][alpha]``, ``mspe[method]``.
    """

    alphas: tuple
    periods: tuple
    methods: list
    sct: dict = field(default_factory=dict)
    mct: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    mspe: dict = field(default_factory=dict)
    tie_break: str = TIE_BREAK
    reference_period: str = ""
    warnings: list = field(default_factory=list)

    def rows(self):
        """Long-format rows: (statistic, alpha, reference, method, value)."""
        out = []
        for m in self.methods:
            for a in self.alphas:
                out.append(("SCT", a, "", m, self.sct[m][a]))
        for m in self.methods:
            if m in self.mct:
                for a in self.alphas:
                    out.append(("MCT", a, "", m, self.mct[m][a]))
        for ref in self.fp:
            for m in self.methods:
                for a in self.alphas:
                    out.append(("FP", a, ref, m, self.fp[ref][m][a]))
        for m in self.methods:
            out.append(("MSPE", "", "", m, self.mspe[m]))
        return out

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["statistic", "alpha", "reference", "method", "value"])
            for stat, a, ref, m, v in self.rows():
                w.writerow([stat, a, ref, m, repr(float(v))])

    def to_dict(self):
        return {
            "alphas": list(self.alphas),
            "periods": list(self.periods),
            "reference_period": self.reference_period,
            "methods": list(self.methods),
            "tie_break": self.tie_break,
            "warnings": list(self.warnings),
            "sct": {m: {str(a): v for a, v in d.items()} for m, d in self.sct.items()},
            "mct": {m: {str(a): v for a, v in d.items()} for m, d in self.mct.items()},
            "fp": {r: {m: {str(a): v for a, v in d.items()} for m, d in dd.items()} for r, dd in self.fp.items()},
            "mspe": dict(self.mspe),
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_text(self):
        """Plain-text tables laid out like a published comparison."""
        ms = self.methods
        heads = [f"Top {_pct(a)}" for a in self.alphas]
        lines = [f"Periods: {self.periods[0]} -> {self.periods[1]}", f"Tie-break: {self.tie_break}", ""]
        lines.append("Segment Consistency")
        lines.append(_table(["Method"] + heads, [[m] + [f"{self.sct[m][a]:.4f}" for a in self.alphas] for m in ms]))
        if self.mct:
            lines.append("")
            lines.append("Method Consistency")
            lines.append(_table(["Method"] + heads,
                                [[m] + [f"{100 * self.mct[m][a]:.2f}%" for a in self.alphas] for m in ms if m in self.mct]))
        lines.append("")
        lines.append("False Positive and MSPE")
        rows = []
        for a in self.alphas:
            for i, ref in enumerate(self.fp):
                label = f"Top {_pct(a)}" if i == 0 else ""
                rows.append([label, f"{ref} model"] + [f"{100 * self.fp[ref][m][a]:.2f}%" for m in ms])
        rows.append(["MSPE", "-"] + [f"{self.mspe[m]:.4f}" for m in ms])
        lines.append(_table(["alpha", "Reference Model"] + ms, rows))
        for wmsg in self.warnings:
            lines.append(f"warning: {wmsg}")
        return "\n".join(lines) + "\n"


def _pct(a):
    return f"{100 * a:g}%"


def _table(header, rows):
    widths = [max(len(str(r[j])) for r in [header] + rows) for j in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" if j < 2 else f"{{:>{w}}}" for j, w in enumerate(widths))
    return "\n".join(fmt.format(*[str(c) for c in r]) for r in [header] + rows)


def evaluate(methods_p1, counts_p2, *, methods_p2=None, references=None, alphas=DEFAULT_ALPHAS,
             periods=("p1", "p2"), reference_period=None):
    """Run every test for every method.

    ``methods_p1`` / ``methods_p2`` map method name to estimates for each
    period; ``references`` maps reference name to estimates from the period
    used as ground truth for FP. A reference drawn from the evaluated period
    itself is allowed but recorded as a warning.
    """
    names = list(methods_p1)
    reference_period = periods[1] if reference_period is None else reference_period
    report = EvaluationReport(tuple(alphas), tuple(periods), names, reference_period=str(reference_period))
    if str(reference_period) == str(periods[0]):
        report.warnings.append("FP reference period overlaps the evaluated period")
    for m in names:
        est = methods_p1[m]
        report.sct[m] = {a: sct(est, counts_p2, a) for a in alphas}
        report.mspe[m] = mspe(est, counts_p2)
        if methods_p2 is not None and m in methods_p2:
            report.mct[m] = {a: mct(est, methods_p2[m], a) for a in alphas}
    for ref, ref_est in (references or {}).items():
        report.fp[ref] = {m: {a: fp_rate(methods_p1[m], ref_est, a) for a in alphas} for m in names}
    return report
