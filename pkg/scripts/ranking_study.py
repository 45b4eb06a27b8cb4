"""PAYG-only vs hybrid optimal revenue over random markets.

    python3 scripts/ranking_study.py --n 100 --seed 7 --jobs 4
"""
import argparse
from collections import Counter
from pathlib import Path

from cloudprice import revenue as rev


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/rank.csv"))
    args = ap.parse_args()

    rows = rev.revenue_ranking_study(args.n, seed=args.seed, n_jobs=args.jobs)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        rev.write_study_csv(rows, fh)

    held = sum(r.ranking_holds for r in rows)
    print(f"PAYG optimum above hybrid optimum in {held}/{len(rows)} markets")
    for case, n in sorted(Counter(r.hybrid_case for r in rows).items()):
        print(f"  hybrid optimum in {case}: {n}")
    ratio = [r.R_hybrid / r.R_payg for r in rows]
    print(f"hybrid/PAYG revenue ratio: min {min(ratio):.4f}, max {max(ratio):.4f}")
    for r in rows:
        if not r.ranking_holds:
            print("counterexample:", r)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
