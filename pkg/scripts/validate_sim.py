"""Simulated spot waiting times and revenue against the analytic formulas.

Runs the spot-only market at its equilibrium cutoffs and the hybrid market
at the revenue-maximizing PAYG price, then prints per-bucket sojourn times
next to the predicted waiting curve.

    python3 scripts/validate_sim.py --horizon 1e6
"""
import argparse

from cloudprice import equilibrium as eq, model as m, revenue as rev, sim


def report(name, params, regime, cutoffs, predicted, horizon, seed):
    stats = sim.simulate(params, regime, cutoffs, horizon, seed=seed)
    curve = sim.compare_waiting_curve(stats, cutoffs, params)
    print(f"\n{name}: cutoffs ({cutoffs.c1:.5f}, {cutoffs.c2:.5f})")
    print(f"{'cost':>8} {'n':>8} {'measured':>10} {'predicted':>10} {'rel err':>8}")
    for b in range(len(curve.centers)):
        print(f"{curve.centers[b]:8.4f} {curve.counts[b]:8d} {curve.measured[b]:10.4f} "
              f"{curve.predicted[b]:10.4f} {curve.rel_error[b]:8.4f}")
    total = stats.spot_revenue_rate + stats.payg_revenue_rate
    z = (total - predicted) / stats.total_revenue_se
    print(f"max rel error {curve.max_rel_error:.4f}; revenue {total:.5f} vs {predicted:.5f} ({z:+.2f} se)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=1e6)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    params = m.reference_market()
    spot = eq.solve_spot_cutoffs(params)
    report("spot only", params, sim.SpotOnly(), spot.cutoffs, rev.revenue_spot(params, spot).revenue_rate,
           args.horizon, args.seed)
    p_star, best = rev.optimize_price(rev.Regime.HYBRID, params, spot=spot)
    report(f"hybrid at p = {p_star:.5f}", params, sim.Hybrid(p_star), best.equilibrium.cutoffs, best.revenue_rate,
           args.horizon, args.seed + 1)


if __name__ == "__main__":
    main()
