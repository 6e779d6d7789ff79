"""Command line front-end: ``crashsma {estimate,evaluate,simulate,aggregate}``.

Every output file starts with ``#`` comment lines carrying the tool
version, the resolved configuration (minus the output directory) and a hash
of the input, so identical inputs give byte-identical outputs. Files are
written to a scratch directory and moved into place only on success.

Exit codes: 0 success, 2 usage or validation error, 1 computation failure.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import synthetic
from .data import (
    CountValidationError,
    SchemaError,
    SpacingError,
    aggregate,
    load_crash_csv,
    moving_average,
    write_crash_csv,
)
from .eb import ConvergenceError, SingularDesignError, design_matrix, eb_estimate, fit_nb_regression
from .evaluation import DEFAULT_ALPHAS, AlignmentError, MethodEstimates, evaluate
from .haar import max_levels, write_decomposition_csv
from .sma import bandwidth_histogram, bandwidth_levels, sma_estimate
from .threshold import DEFAULT_GRID_SIZE

logger = logging.getLogger("crashsma")


class UsageError(Exception):
    pass


VALIDATION_ERRORS = (
    UsageError,
    SchemaError,
    CountValidationError,
    SpacingError,
    AlignmentError,
    SingularDesignError,
    FileNotFoundError,
    json.JSONDecodeError,
)


def _csv_list(text, cast=str):
    if text is None or text == "":
        return []
    if isinstance(text, (list, tuple)):
        return [cast(t) for t in text]
    return [cast(t.strip()) for t in str(text).split(",") if t.strip()]


def _schema(text):
    out = {}
    for item in _csv_list(text):
        if "=" not in item:
            raise UsageError(f"schema entries look like canonical=header, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolved_config(args):
    skip = {"func", "out", "config", "verbose"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return json.dumps(cfg, sort_keys=True, default=str)


class _Output:
    """Collects files in a scratch directory and publishes them on commit."""

    def __init__(self, out_dir, header):
        self.out_dir = Path(out_dir)
        self.header = list(header)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".crashsma-", dir=self.out_dir))
        self.names = []

    def path(self, name):
        self.names.append(name)
        return self.tmp / name

    def writer(self, name, columns):
        fh = open(self.path(name), "w", newline="", encoding="utf-8")
        for line in self.header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        return fh, w

    def text(self, name, body):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            for line in self.header:
                fh.write(f"# {line}\n")
            fh.write(body)

    def commit(self):
        for name in self.names:
            os.replace(self.tmp / name, self.out_dir / name)
        shutil.rmtree(self.tmp, ignore_errors=True)
        return [self.out_dir / n for n in self.names]

    def discard(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _header(args, input_hash, extra=()):
    return [f"crashsma {__version__}", f"config: {_resolved_config(args)}", f"input_sha256: {input_hash}", *extra]


def _load(args):
    schema = _schema(args.schema)
    return load_crash_csv(args.input, schema, fill_gaps_zero=args.fill_gaps_zero,
                          combine_directions=args.combine_directions)


def _levels_for(n, requested):
    if n < 2:
        return None
    top = max_levels(n)
    if requested is None:
        return top
    if requested > top:
        logger.warning("levels %d exceeds floor(log2 %d) = %d; using %d", requested, n, top, top)
        return top
    return requested


def _estimate_all(series_list, args):
    out = {}
    for s in series_list:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out[s.key] = sma_estimate(
                s, _levels_for(len(s), args.levels), args.grid_size, clamp=not args.disable_clamp
            )
    return out


# ---------------------------------------------------------------- estimate


def cmd_estimate(args):
    ds = _load(args)
    series = [s for k, s in ds.series.items() if args.period is None or k[2] == args.period]
    if not series:
        raise UsageError(f"no series for period {args.period!r}")
    results = _estimate_all(series, args)
    levels = {"|".join(k): r.levels for k, r in results.items()}
    out = _Output(args.out, _header(args, _file_hash(args.input), [f"levels: {json.dumps(levels, sort_keys=True)}"]))
    try:
        sub = type(ds)({s.key: s for s in series}, {k: v for k, v in ds.covariates.items() if k in results})
        write_crash_csv(
            sub,
            out.path("estimates.csv"),
            extra_columns={
                "sma_risk": {k: r.estimates for k, r in results.items()},
                "bandwidth_miles": {k: r.bandwidth_miles for k, r in results.items()},
            },
            header_lines=out.header,
        )
        fh, w = out.writer("bandwidth_map.csv", ["route_id", "direction", "period", "milepost", "bandwidth_miles", "smoothing_levels"])
        with fh:
            for k, r in results.items():
                s = r.source_series
                klev = bandwidth_levels(r.t_diffs) if r.t_diffs.shape[1] else np.zeros(len(s), dtype=int)
                for i, mp in enumerate(s.mileposts):
                    w.writerow([s.route_id, s.direction, s.period_label, f"{mp:.6f}", repr(float(r.bandwidth_miles[i])), int(klev[i])])
        fh, w = out.writer("bandwidth_histogram.csv", ["bandwidth_miles", "sections", "proportion"])
        total = sum(len(r.estimates) for r in results.values())
        with fh:
            for bw, prop in bandwidth_histogram(results.values()):
                w.writerow([repr(bw), int(round(prop * total)), repr(prop)])
        fh, w = out.writer("thresholds.csv", ["route_id", "direction", "period", "level", "threshold"])
        with fh:
            for k, r in results.items():
                for lev, th in enumerate(r.thresholds.per_level_threshold, start=1):
                    w.writerow([*k, lev, repr(float(th))])
        if args.pure_profiles:
            fh, w = out.writer("pure_profiles.csv", ["route_id", "direction", "period", "level", "threshold", "pure"])
            with fh:
                for k, r in results.items():
                    for lev, prof in enumerate(r.thresholds.pure_profiles or [], start=1):
                        for th, val in prof:
                            w.writerow([*k, lev, repr(float(th)), repr(float(val))])
        if args.dump_decomposition:
            from .haar import decompose

            for k, r in results.items():
                if r.levels == 0:
                    continue
                name = "decomposition_" + "_".join(_safe(p) for p in k) + ".csv"
                write_decomposition_csv(decompose(r.source_series.counts, r.levels), out.path(name), out.header)
    except BaseException:
        out.discard()
        raise
    return out.commit()


def _safe(text):
    return "".join(c if c.isalnum() or c in "-." else "-" for c in str(text)) or "blank"


# ---------------------------------------------------------------- evaluate


def _pooled(ds, period):
    series = ds.by_period(period)
    sections = tuple((s.route_id, s.direction, round(float(mp), 6)) for s in series for mp in s.mileposts)
    counts = np.concatenate([s.counts for s in series]).astype(np.float64)
    return series, sections, counts


def _method_estimates(ds, period, args, eb_cols):
    series, sections, counts = _pooled(ds, period)
    out = {"count": MethodEstimates("count", period, counts, sections)}
    models = {}
    if eb_cols is not None:
        X, y, names = design_matrix(ds, period, eb_cols[0], eb_cols[1])
        model = fit_nb_regression(X, y, names)
        models[period] = model
        out["eb"] = MethodEstimates("eb", period, eb_estimate(model.fitted_mu, model.overdispersion, y), sections)
    res = _estimate_all(series, args)
    sma = np.concatenate([res[s.key].estimates for s in series])
    out["sma"] = MethodEstimates("sma", period, sma, sections)
    return out, counts, models


def _average_reports(reports):
    base = reports[0]

    def avg(get):
        return float(np.mean([get(r) for r in reports]))

    for m in base.methods:
        base.sct[m] = {a: avg(lambda r: r.sct[m][a]) for a in base.alphas}
        if m in base.mct:
            base.mct[m] = {a: avg(lambda r: r.mct[m][a]) for a in base.alphas}
        base.mspe[m] = avg(lambda r: r.mspe[m])
    for ref in base.fp:
        for m in base.methods:
            base.fp[ref][m] = {a: avg(lambda r: r.fp[ref][m][a]) for a in base.alphas}
    base.periods = (reports[0].periods[0], reports[-1].periods[1])
    base.warnings.append(f"statistics averaged over {len(reports)} consecutive period pairs")
    return base


def cmd_evaluate(args):
    ds = _load(args)
    periods = ds.periods
    if len(periods) < 2:
        raise UsageError(f"evaluation needs two periods, found {periods}")
    alphas = _csv_list(args.alphas, float) or list(DEFAULT_ALPHAS)
    for a in alphas:
        if not 0 < a < 1:
            raise UsageError(f"alpha must be in (0, 1), got {a}")
    covs = _csv_list(args.eb_covariates)
    cats = _csv_list(args.eb_categorical)
    eb_cols = (covs, cats) if (covs or cats) else None
    notices = []
    if eb_cols is None:
        notices.append("EB omitted: no covariates supplied (--eb-covariates / --eb-categorical)")
        logger.info(notices[-1])

    if args.average_pairs:
        pairs = list(zip(periods[:-1], periods[1:]))
    else:
        chosen = _csv_list(args.periods) or periods[:2]
        if len(chosen) != 2 or any(p not in periods for p in chosen):
            raise UsageError(f"--periods must name two of {periods}, got {chosen}")
        pairs = [tuple(chosen)]

    cache = {}
    models = {}

    def for_period(p):
        if p not in cache:
            est, counts, m = _method_estimates(ds, p, args, eb_cols)
            cache[p] = (est, counts)
            models.update(m)
        return cache[p]

    reports = []
    for p1, p2 in pairs:
        ref_p = args.reference_period or p2
        if ref_p not in periods:
            raise UsageError(f"reference period {ref_p!r} not in {periods}")
        est1, _ = for_period(p1)
        est2, counts2 = for_period(p2)
        ref_est, _ = for_period(ref_p)
        counts2_me = MethodEstimates("count", p2, counts2, est2["count"].sections)
        if est1["count"].sections != est2["count"].sections:
            raise AlignmentError(f"periods {p1} and {p2} cover different sections")
        reports.append(
            evaluate(
                est1,
                counts2_me,
                methods_p2=est2,
                references=ref_est,
                alphas=alphas,
                periods=(p1, p2),
                reference_period=ref_p,
            )
        )
    report = reports[0] if len(reports) == 1 else _average_reports(reports)
    report.warnings.extend(notices)

    out = _Output(args.out, _header(args, _file_hash(args.input)))
    try:
        report.to_csv(out.path("report.csv"), out.header)
        out.text("report.txt", report.to_text())
        doc = report.to_dict()
        doc["provenance"] = out.header
        with open(out.path("report.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for p, model in sorted(models.items()):
            model.write_report(out.path(f"eb_coefficients_{_safe(p)}.csv"), out.header)
            model.to_json(out.path(f"eb_model_{_safe(p)}.json"))
    except BaseException:
        out.discard()
        raise
    return out.commit()


# ---------------------------------------------------------------- simulate


def _profile(args):
    if args.profile:
        with open(args.profile, encoding="utf-8") as fh:
            doc = json.load(fh)
        segs = doc["segments"] if isinstance(doc, dict) else doc
        try:
            return synthetic.build_profile(segs), _canonical_hash(segs)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad profile: {exc}") from None
    name = args.preset or ("pure256" if args.pure_check else "figure2")
    try:
        prof = synthetic.preset(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return prof, _canonical_hash(synthetic.PRESETS[name])


def _canonical_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def cmd_simulate(args):
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    prof, phash = _profile(args)
    n = len(prof)
    if args.ma_window % 2 == 0 or args.ma_window > n:
        raise UsageError(f"--ma-window must be odd and at most {n}")
    batch = synthetic.sample_counts(prof, args.seed, args.replicates)
    out = _Output(args.out, _header(args, phash))
    try:
        fh, w = out.writer("draws.csv", ["replicate"] + [f"s{i}" for i in range(n)])
        with fh:
            w.writerow(["lambda"] + [repr(float(v)) for v in prof.lam])
            for r in range(batch.replicates):
                w.writerow([r] + batch.draws[r].tolist())

        if not args.skip_mse:
            mse = {"count": [], "sma": [], f"moving_average_{args.ma_window}": []}
            for r in range(batch.replicates):
                y = batch.draws[r]
                mse["count"].append(synthetic.mse_vs_truth(y, prof))
                est = sma_estimate(y, _levels_for(n, args.levels), args.grid_size, clamp=not args.disable_clamp)
                mse["sma"].append(synthetic.mse_vs_truth(est.estimates, prof))
                mse[f"moving_average_{args.ma_window}"].append(
                    synthetic.mse_vs_truth(moving_average(y, args.ma_window), prof)
                )
            base = np.array(mse["count"])
            rows = []
            for m, vals in mse.items():
                v = np.array(vals)
                se = float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else float("nan")
                rows.append((float(v.mean()), m, se, int(np.sum(v < base))))
            fh, w = out.writer("mse.csv", ["method", "mean_mse", "se_mse", "replicates_below_count", "replicates"])
            with fh:
                for mean, m, se, wins in sorted(rows):
                    w.writerow([m, repr(mean), repr(se), wins, batch.replicates])

        if args.pure_check:
            top = float(np.sqrt(2 * prof.lam.max()) * np.sqrt(8 * np.log(n)))
            grid = np.linspace(0, top, args.pure_grid_size)
            table = synthetic.pure_unbiasedness_experiment(prof, grid, args.seed, args.replicates)
            fh, w = out.writer(
                "pure_check.csv",
                ["threshold", "mean_pure", "se_pure", "mean_true_mse", "se_true_mse", "se_combined", "se_paired", "within_3se"],
            )
            with fh:
                for row in table:
                    within = "undefined" if row.within is None else str(row.within).lower()
                    w.writerow([repr(row.threshold), repr(row.mean_pure), repr(row.se_pure), repr(row.mean_mse),
                                repr(row.se_mse), repr(row.se_combined), repr(row.se_paired), within])
    except BaseException:
        out.discard()
        raise
    return out.commit()


# ---------------------------------------------------------------- aggregate


def cmd_aggregate(args):
    if args.factor is None and args.window is None:
        raise UsageError("aggregate needs --factor and/or --window")
    ds = _load(args)
    out = _Output(args.out, _header(args, _file_hash(args.input)))
    try:
        if args.factor is not None:
            if args.factor < 1:
                raise UsageError("--factor must be a positive integer")
            agg = {k: aggregate(s, args.factor) for k, s in ds.series.items()}
            write_crash_csv(
                type(ds)(agg),
                out.path("aggregated.csv"),
                extra_columns={"partial": {k: _partial_flags(s) for k, s in agg.items()}},
                header_lines=out.header,
            )
        if args.window is not None:
            ma = {}
            for k, s in ds.series.items():
                try:
                    ma[k] = moving_average(s, args.window)
                except ValueError as exc:
                    raise UsageError(f"{k}: {exc}") from None
            write_crash_csv(
                type(ds)(dict(ds.series)),
                out.path("moving_average.csv"),
                extra_columns={"moving_average": ma},
                header_lines=out.header,
            )
    except BaseException:
        out.discard()
        raise
    return out.commit()


def _partial_flags(s):
    flags = np.zeros(len(s), dtype=np.int64)
    if s.partial_last:
        flags[-1] = 1
    return flags


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="crashsma", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"crashsma {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        sp.add_argument("--config", help="JSON file of option defaults (keys are option names with underscores)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        if needs_input:
            sp.add_argument("--input", required=True, help="crash CSV")
            sp.add_argument("--schema", default="", help="column mapping, e.g. milepost=MP,count=N")
            sp.add_argument("--fill-gaps-zero", action="store_true", help="zero-fill milepost gaps instead of failing")
            sp.add_argument("--combine-directions", action="store_true",
                            help="analyse both directions of a route as one series (counts added)")

    def smoothing(sp):
        sp.add_argument("--levels", type=int, default=None, help="decomposition levels (default floor(log2 n) per route)")
        sp.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE, help="thresholds tried per level")
        sp.add_argument("--disable-clamp", action="store_true", help="testing only: skip the zero floor")

    sp = sub.add_parser("estimate", help="SMA crash risk and bandwidth per section")
    common(sp)
    smoothing(sp)
    sp.add_argument("--period", default=None, help="only this period")
    sp.add_argument("--pure-profiles", action="store_true", help="also write (threshold, PURE) profiles")
    sp.add_argument("--dump-decomposition", action="store_true", help="also write sums/differences per series")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("evaluate", help="SCT/MCT/FP/MSPE for count, SMA and optional EB")
    common(sp)
    smoothing(sp)
    sp.add_argument("--periods", default="", help="evaluated pair, e.g. 2014,2015 (default: first two)")
    sp.add_argument("--reference-period", default=None, help="period for FP reference models (default: second of the pair)")
    sp.add_argument("--average-pairs", action="store_true", help="average over all consecutive period pairs")
    sp.add_argument("--alphas", default=",".join(str(a) for a in DEFAULT_ALPHAS))
    sp.add_argument("--eb-covariates", default="", help="numeric covariate columns for the SPF")
    sp.add_argument("--eb-categorical", default="", help="categorical columns (route_id, direction or covariates)")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("simulate", help="synthetic Poisson experiments")
    common(sp, needs_input=False)
    smoothing(sp)
    sp.add_argument("--preset", default=None, help=f"one of {sorted(synthetic.PRESETS)}")
    sp.add_argument("--profile", default=None, help="profile JSON: list of {length, shape, params}")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--replicates", type=int, default=100)
    sp.add_argument("--ma-window", type=int, default=33, help="odd moving-average window compared against")
    sp.add_argument("--pure-check", action="store_true", help="also run the PURE unbiasedness experiment")
    sp.add_argument("--pure-grid-size", type=int, default=10)
    sp.add_argument("--skip-mse", action="store_true", help="skip the per-method MSE study")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("aggregate", help="block sums and moving averages")
    common(sp)
    sp.add_argument("--factor", type=int, default=None)
    sp.add_argument("--window", type=int, default=None)
    sp.set_defaults(func=cmd_aggregate)
    return p


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("--config must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except VALIDATION_ERRORS as exc:
        print(f"crashsma: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        files = args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"crashsma: error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"crashsma: computation failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"crashsma: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for f in files:
        logger.info("wrote %s", f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
