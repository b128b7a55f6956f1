"""Command line interface: fit, group, calibrate, test, sample, reproduce.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical or calibration failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import sampler
from .dissmann import edge_report_csv, parse_candidates, pseudo_obs, select_structure
from .exceptions import (CalibrationError, ConfigurationError, DegenerateError, DomainError,
                         OptimizationError, StructureError)
from .experiments import STUDIES, ExperimentConfig, emit_tables, run_study
from .grouping import Grouping, greedy_grouping
from .meff import Calibration, calibrate, decide
from .numerics import RngStream
from .vine_model import VineModel

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(ValueError):
    """Unreadable or malformed input file."""


def read_csv_matrix(path, header=False):
    """Parse a numeric CSV; errors name the offending row and column (1-based)."""
    rows = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        names = None
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and header:
                names = [c.strip() for c in row]
                continue
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col}: "
                                    f"cannot parse {cell!r} as a number") from None
                if not np.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col}: non-finite value")
                vals.append(v)
            if rows and len(vals) != len(rows[0]):
                raise DataError(f"{path}: row {lineno} has {len(vals)} columns, expected {len(rows[0])}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows), names


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_fit(args):
    x, names = read_csv_matrix(args.input, args.header)
    if x.shape[0] < 10:
        raise DataError(f"{args.input}: need at least 10 rows, found {x.shape[0]}")
    try:
        u = pseudo_obs(x)
    except DegenerateError as exc:
        col = exc.column
        label = names[col] if names and col < len(names) else f"{col + 1}"
        raise DegenerateError(f"column {label} is constant") from None
    K = args.trunc
    if not 1 <= K <= x.shape[1] - 1:
        raise ConfigurationError(f"--trunc must lie in [1, {x.shape[1] - 1}]")
    cands = parse_candidates(args.families) if args.families else None
    model = select_structure(u, K, cands)
    model.to_json(args.out)
    report = args.report or os.path.splitext(args.out)[0] + "_edges.csv"
    edge_report_csv(model, report)
    print(model.summary())
    print(f"model written to {args.out}; edge report to {report}")
    return EXIT_OK


def cmd_group(args):
    model = VineModel.from_json(args.model)
    stream = RngStream(args.seed)
    g = greedy_grouping(model, args.blocks, args.target_size, rng=stream.substream(2),
                        deterministic_fill=args.deterministic_fill)
    g.to_json(args.out)
    print(g.report(model))
    return EXIT_OK


def cmd_calibrate(args):
    grouping = Grouping.from_json(args.groups)
    model = VineModel.from_json(args.model) if args.model else None
    stream = RngStream(args.seed)
    cal = calibrate(grouping, args.marginal, model, args.alpha, args.order, args.optimized,
                    args.mc, stream.substream(1))
    cal.to_json(args.out)
    print(cal.summary())
    return EXIT_OK


def cmd_test(args):
    cal = Calibration.from_json(args.calib)
    t, _ = read_csv_matrix(args.stats, args.header)
    if t.shape[0] != 1:
        raise ConfigurationError("the statistics file must hold exactly one row")
    t = t[0]
    if t.size != cal.M:
        raise ConfigurationError(f"expected {cal.M} statistics, got {t.size}")
    reject, glob = decide(t, cal)
    for j, (tj, cj, r) in enumerate(zip(t, cal.critical_values, reject), start=1):
        print(f"H{j}: t={tj:.6g} c={cj:.6g} {'reject' if r else 'retain'}")
    print(f"global null: {'reject' if glob else 'retain'}")
    return EXIT_OK


def cmd_sample(args):
    model = VineModel.from_json(args.model)
    u = sampler.sample(model, args.n, RngStream(args.seed))
    np.savetxt(args.out, u, delimiter=",", fmt="%.17g")
    print(f"{args.n} draws written to {args.out}")
    return EXIT_OK


def cmd_reproduce(args):
    sizes = [int(s) for s in str(args.sizes).split(",") if s.strip()]
    if not sizes:
        raise ConfigurationError("--sizes is empty")
    comps = tuple(c.strip() for c in args.comparators.split(",") if c.strip())
    fams = tuple(args.families.split(",")) if args.families else None
    results = []
    for n in sizes:
        cfg = ExperimentConfig(args.study, n, runs=args.runs, B=args.blocks, K=args.trunc,
                               alpha=args.alpha, mc_size=args.mc, seed=args.seed,
                               comparators=comps, deterministic_fill=args.deterministic_fill,
                               families=fams)
        res = run_study(cfg, threads=args.threads)
        results.append(res)
        print(f"{args.study} n={n}: " + "; ".join(
            f"{c} M_eff={res.rows[c]['meff']:.3f} c={res.rows[c]['c']:.4f} "
            f"power={res.rows[c]['power']:.2f} FWER={res.rows[c]['fwer']:.2f}" for c in comps))
    for path in emit_tables(results, args.out):
        print(f"wrote {path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vinemeff", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a truncated vine copula to a data CSV")
    f.add_argument("--input", required=True)
    f.add_argument("--header", action="store_true", help="first CSV row holds column names")
    f.add_argument("--trunc", type=int, default=2)
    f.add_argument("--families", default=None, help="comma-separated family names")
    f.add_argument("--out", required=True)
    f.add_argument("--report", default=None, help="edge report CSV path")
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("group", help="greedy block grouping from a model file")
    g.add_argument("--model", required=True)
    g.add_argument("--blocks", type=int, required=True)
    g.add_argument("--target-size", type=int, default=None)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--deterministic-fill", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_group)

    c = sub.add_parser("calibrate", help="calibrate the local level and critical values")
    c.add_argument("--model", default=None)
    c.add_argument("--groups", required=True)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--marginal", choices=["std_normal", "half_normal"], default="std_normal")
    c.add_argument("--order", type=int, default=2)
    c.add_argument("--optimized", action=argparse.BooleanOptionalAction, default=True)
    c.add_argument("--mc", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("test", help="apply a calibration to one row of statistics")
    t.add_argument("--stats", required=True)
    t.add_argument("--calib", required=True)
    t.add_argument("--header", action="store_true")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("sample", help="draw from a model file into a CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    r = sub.add_parser("reproduce", help="run a simulation study and write its tables")
    r.add_argument("--study", choices=sorted(STUDIES), required=True)
    r.add_argument("--runs", type=int, default=400)
    r.add_argument("--sizes", default="100,200,300")
    r.add_argument("--blocks", type=int, default=3)
    r.add_argument("--trunc", type=int, default=2)
    r.add_argument("--alpha", type=float, default=0.05)
    r.add_argument("--mc", type=int, default=20_000)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--comparators", default="sidak,fixed,chosen")
    r.add_argument("--families", default=None)
    r.add_argument("--deterministic-fill", action="store_true")
    r.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateError, DomainError, StructureError,
            json.JSONDecodeError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        for a, m, b in exc.trace[-5:]:
            print(f"  alpha_loc={a:.6g} M_eff={m:.4f} bound={b:.6g}", file=sys.stderr)
        return EXIT_NUMERIC
    except OptimizationError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
