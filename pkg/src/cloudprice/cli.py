"""``cloudprice`` command line: solve, sweep, simulate, rank.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import sys
from pathlib import Path

from . import equilibrium as eqm
from . import revenue as rev
from . import sim
from .model import (CONFIG_KEYS, CutoffVector, InvalidParams, InvalidPrice, SolverError, Unstable, load_config,
                    reference_market, validate)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="market parameter file (key = value lines)")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", type=Path, help="write CSV here instead of stdout")
    g = p.add_argument_group("market overrides (default: reference market)")
    for key in CONFIG_KEYS:
        g.add_argument(f"--{key}", dest=f"m_{key}", metavar=key.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloudprice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="equilibrium cutoffs (spot-only and, with --price, hybrid)")
    _add_common(p)
    p.add_argument("--price", type=float)

    p = sub.add_parser("sweep", help="revenue curves over a PAYG price grid")
    _add_common(p)
    p.add_argument("--n-grid", type=_positive_int, default=256)

    p = sub.add_parser("simulate", help="discrete-event simulation at solved cutoffs")
    _add_common(p)
    p.add_argument("--regime", choices=("spot", "hybrid", "payg"), default="spot")
    p.add_argument("--price", type=float)
    p.add_argument("--horizon", type=float, default=1e6)
    p.add_argument("--warmup", type=float, help="default: 10%% of the horizon")
    p.add_argument("--buckets", type=_positive_int, default=20)
    p.add_argument("--min-samples", type=_positive_int, default=500)
    p.add_argument("--compare-out", type=Path, help="write the waiting-curve comparison CSV here")

    p = sub.add_parser("rank", help="PAYG vs hybrid revenue ranking on random markets")
    _add_common(p)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--n-grid", type=_positive_int, default=rev.N_GRID)
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    return parser


def market_from_args(args):
    overrides = {k: getattr(args, f"m_{k}") for k in CONFIG_KEYS if getattr(args, f"m_{k}") is not None}
    if args.config is not None:
        if not args.config.is_file():
            raise InvalidParams([f"config file {args.config} does not exist"])
        params = load_config(args.config)
        if overrides:
            params = params.replace(**overrides)
    else:
        params = reference_market().replace(**overrides) if overrides else reference_market()
    validate(params)
    return params


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _num(x):
    return "" if x is None else repr(float(x))


def _log(args):
    """Human-readable output goes to stdout unless stdout carries the CSV."""
    return sys.stderr if args.out is None else sys.stdout


def cmd_solve(args, params):
    if args.price is not None and not args.price > 0:
        raise InvalidPrice(f"PAYG price must be > 0, got {args.price}")
    spot = eqm.solve_spot_cutoffs(params)
    out = _log(args)
    print(f"common threshold c_bar = {spot.common_threshold:.10g}", file=out)
    print(f"spot cutoffs (c1, c2) = ({spot.cutoffs.c1:.10g}, {spot.cutoffs.c2:.10g})", file=out)
    row = {"common_threshold": spot.common_threshold, "c1_spot": spot.cutoffs.c1, "c2_spot": spot.cutoffs.c2,
           "price": None, "c1": None, "c2": None, "case": "", "payg1_lo": None, "payg1_hi": None,
           "payg2_lo": None, "payg2_hi": None}
    if args.price is not None:
        h = eqm.solve_hybrid_cutoffs(args.price, params, spot)
        print(f"price {args.price:g}: case {h.case_tag.value}, cutoffs ({h.cutoffs.c1:.10g}, {h.cutoffs.c2:.10g})",
              file=out)
        for i, iv in enumerate(h.payg_intervals, start=1):
            print(f"  class {i} PAYG interval: " + ("none" if iv is None else f"[{iv[0]:.10g}, {iv[1]:.10g}]"),
                  file=out)
        row.update(price=args.price, c1=h.cutoffs.c1, c2=h.cutoffs.c2, case=h.case_tag.value)
        for i, iv in enumerate(h.payg_intervals, start=1):
            if iv is not None:
                row[f"payg{i}_lo"], row[f"payg{i}_hi"] = iv
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(row.keys())
        w.writerow([v if isinstance(v, str) else _num(v) for v in row.values()])


SWEEP_COLUMNS = ("p", "R_payg", "R_spot", "R_hybrid", "case")


def sweep_rows(params, n_grid):
    spot = eqm.solve_spot_cutoffs(params)
    r_spot = rev.revenue_spot(params, spot).revenue_rate
    grid = rev.price_grid(params, spot, n_grid)
    rows = []
    for p in grid:
        h = rev.revenue_hybrid(float(p), params, spot)
        rows.append((float(p), rev.revenue_payg(float(p), params).revenue_rate, r_spot, h.revenue_rate,
                     h.equilibrium.case_tag.value))
    return rows


def cmd_sweep(args, params):
    rows = sweep_rows(params, args.n_grid)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r[0]), repr(r[1]), repr(r[2]), repr(r[3]), r[4]])


COMPARE_COLUMNS = ("bucket", "cost_center", "count", "measured", "predicted", "rel_error", "included")


def cmd_simulate(args, params):
    spot = eqm.solve_spot_cutoffs(params)
    if args.regime == "spot":
        regime, cutoffs, predicted = sim.SpotOnly(), spot.cutoffs, rev.revenue_spot(params, spot)
    else:
        if args.price is None:
            raise InvalidPrice(f"--price is required for --regime {args.regime}")
        if not args.price > 0:
            raise InvalidPrice(f"PAYG price must be > 0, got {args.price}")
        if args.regime == "hybrid":
            regime = sim.Hybrid(args.price)
            cutoffs = eqm.solve_hybrid_cutoffs(args.price, params, spot).cutoffs
            predicted = rev.revenue_hybrid(args.price, params, spot)
        else:
            regime, cutoffs, predicted = sim.PaygOnly(args.price), CutoffVector(0.0, 0.0), \
                rev.revenue_payg(args.price, params)
    stats = sim.simulate(params, regime, cutoffs, args.horizon, args.warmup, seed=args.seed, n_buckets=args.buckets)
    report = sim.compare_waiting_curve(stats, cutoffs, params, min_samples=args.min_samples)
    with _output(args.out) as fh:
        sim.write_sim_csv(stats, fh)
    if args.compare_out is not None:
        with open(args.compare_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COMPARE_COLUMNS)
            for b in range(len(report.centers)):
                inc = b not in report.insufficient
                w.writerow([b, repr(float(report.centers[b])), int(report.counts[b]),
                            sim._fmt(report.measured[b]), repr(float(report.predicted[b])),
                            sim._fmt(report.rel_error[b]), str(inc).lower()])
    log = _log(args)
    print(f"waiting curve: max rel error {report.max_rel_error:.4f}, mean {report.mean_rel_error:.4f}, "
          f"{len(report.insufficient)} bucket(s) below {args.min_samples} samples", file=log)
    total = stats.spot_revenue_rate + stats.payg_revenue_rate
    se = stats.total_revenue_se
    print(f"revenue rate: measured {total:.6f} (se {se:.2g}), predicted {predicted.revenue_rate:.6f}", file=log)


def cmd_rank(args, params):
    rows = rev.revenue_ranking_study(args.n, seed=args.seed, n_grid=args.n_grid, n_jobs=args.jobs)
    with _output(args.out) as fh:
        rev.write_study_csv(rows, fh)
    bad = [r for r in rows if not r.ranking_holds]
    print(f"ranking holds in {len(rows) - len(bad)}/{len(rows)} configurations", file=_log(args))
    for r in bad:
        print(f"counterexample: {r}", file=sys.stderr)


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "simulate": cmd_simulate, "rank": cmd_rank}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = market_from_args(args)
        COMMANDS[args.command](args, params)
    except (InvalidParams, InvalidPrice) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, Unstable, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
