"""Revenue of PAYG-only, spot-only and hybrid operation against the PAYG price.

Writes the sweep CSV and prints where each curve peaks plus the shape
features worth eyeballing: the small hybrid revenue near p = 0, the flat
stretch past mu*v1 - c1 and the PAYG kink at mu*v2.

    python3 scripts/revenue_curves.py --out results/sweep.csv
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from cloudprice import cli, equilibrium as eq, model as m


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="market file; default is the reference market")
    ap.add_argument("--n-grid", type=int, default=2048)
    ap.add_argument("--out", type=Path, default=Path("results/sweep.csv"))
    args = ap.parse_args()

    params = m.load_config(args.config) if args.config else m.reference_market()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    argv = ["sweep", "--n-grid", str(args.n_grid), "--out", str(args.out)]
    if args.config:
        argv += ["--config", str(args.config)]
    if cli.main(argv) != 0:
        raise SystemExit("sweep failed")

    with open(args.out) as fh:
        rows = list(csv.DictReader(fh))
    p = np.array([float(r["p"]) for r in rows])
    cols = {k: np.array([float(r[k]) for r in rows]) for k in ("R_payg", "R_spot", "R_hybrid")}
    spot = eq.solve_spot_cutoffs(params)
    for k, v in cols.items():
        i = int(np.argmax(v))
        print(f"{k:9s} max {v[i]:.6f} at p = {p[i]:.5f}")
    mu = params.service_rate
    print(f"hybrid revenue at the smallest price ({p[0]:.2e}): {cols['R_hybrid'][0]:.3e}")
    flat = p > mu * params.class1.value - spot.cutoffs.c1
    print(f"hybrid equals spot on all {int(flat.sum())} rows with p > mu*v1 - c1: "
          f"{bool(np.all(cols['R_hybrid'][flat] == cols['R_spot'][flat]))}")
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
