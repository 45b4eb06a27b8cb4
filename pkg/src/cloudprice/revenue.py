"""Expected revenue per unit time under PAYG-only, spot-only and hybrid operation,
optimal-price search, and the random-configuration revenue ranking study."""
from __future__ import annotations

import csv
import enum
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .equilibrium import (HybridEquilibrium, PriceCase, SpotEquilibrium, price_case, solve_hybrid_cutoffs,
                          solve_spot_cutoffs)
from .model import InvalidPrice, MarketParams, market, validate
from .numerics import golden_max
from .waiting import DEFAULT_MODEL, WaitingTimeModel

N_GRID = 2048


class Regime(str, enum.Enum):
    PAYG_ONLY = "PaygOnly"
    SPOT_ONLY = "SpotOnly"
    HYBRID = "Hybrid"


@dataclass(frozen=True)
class RevenueReport:
    regime: Regime
    price: Optional[float]
    revenue_rate: float
    payg: tuple = (0.0, 0.0)
    spot: tuple = (0.0, 0.0)
    equilibrium: object = field(default=None, compare=False, repr=False)

    @property
    def components(self) -> dict:
        return {"payg1": self.payg[0], "payg2": self.payg[1], "spot1": self.spot[0], "spot2": self.spot[1]}


def _check_price(p):
    if not p > 0:
        raise InvalidPrice(f"PAYG price must be > 0, got {p}")


def _payg_terms(p, params, cutoffs=(0.0, 0.0)):
    mu = params.service_rate
    out = []
    for i, cl in enumerate(params.classes, start=1):
        dist = cl.cost_dist
        share = dist.mass_between(cutoffs[i - 1], params.upper(i) - p)
        out.append(cl.arrival_rate * p / mu * max(share, 0.0))
    return tuple(out)


def _spot_terms(cutoffs, params, model):
    c1, c2 = cutoffs
    return tuple(cl.arrival_rate * model.payment_integral(i, ci, c1, c2, params)
                 for i, (cl, ci) in enumerate(zip(params.classes, (c1, c2)), start=1))


def revenue_payg(p: float, params: MarketParams) -> RevenueReport:
    """PAYG in isolation at price ``p``."""
    _check_price(p)
    terms = _payg_terms(p, params)
    return RevenueReport(Regime.PAYG_ONLY, p, sum(terms), payg=terms)


def revenue_spot(params: MarketParams, spot: Optional[SpotEquilibrium] = None,
                 model: WaitingTimeModel = DEFAULT_MODEL) -> RevenueReport:
    """Spot market in isolation at its equilibrium cutoffs."""
    if spot is None:
        validate(params)
        spot = solve_spot_cutoffs(params, model)
    terms = _spot_terms(spot.cutoffs, params, model)
    return RevenueReport(Regime.SPOT_ONLY, None, sum(terms), spot=terms, equilibrium=spot)


def revenue_hybrid(p: float, params: MarketParams, spot: Optional[SpotEquilibrium] = None,
                   model: WaitingTimeModel = DEFAULT_MODEL) -> RevenueReport:
    """PAYG at price ``p`` alongside the spot market."""
    _check_price(p)
    eq = solve_hybrid_cutoffs(p, params, spot, model)
    payg = _payg_terms(p, params, eq.cutoffs)
    spot_terms = _spot_terms(eq.cutoffs, params, model)
    return RevenueReport(Regime.HYBRID, p, sum(payg) + sum(spot_terms), payg=payg, spot=spot_terms, equilibrium=eq)


class _HybridCurve:
    """``p -> R^h(p)`` with the spot equilibrium solved once and the flat
    high-price region (hybrid revenue equals spot revenue) short-circuited."""

    def __init__(self, params, model, spot=None):
        self.params, self.model = params, model
        self.spot = spot or solve_spot_cutoffs(params, model)
        self.spot_report = revenue_spot(params, self.spot, model)

    def report(self, p):
        if price_case(p, self.params, self.spot) is PriceCase.HIGH:
            s = self.spot_report
            eq = HybridEquilibrium(p, self.spot.cutoffs, PriceCase.HIGH, (None, None))
            return RevenueReport(Regime.HYBRID, p, s.revenue_rate, spot=s.spot, equilibrium=eq)
        return revenue_hybrid(p, self.params, self.spot, self.model)

    def __call__(self, p):
        return self.report(p).revenue_rate


def breakpoint_prices(params: MarketParams, spot: SpotEquilibrium) -> list[float]:
    """Prices where a revenue curve kinks or changes form."""
    mu = params.service_rate
    pts = [mu * params.class2.value,
           mu * params.class2.value - spot.common_threshold,
           mu * params.class1.value - spot.cutoffs.c1]
    return sorted(p for p in pts if 0 < p <= params.upper(1))


def price_grid(params: MarketParams, spot: SpotEquilibrium, n_grid: int = N_GRID) -> np.ndarray:
    top = params.upper(1)
    grid = np.linspace(top / n_grid, top, n_grid)
    return np.unique(np.concatenate([grid, breakpoint_prices(params, spot)]))


def optimize_price(regime, params: MarketParams, n_grid: int = N_GRID, model: WaitingTimeModel = DEFAULT_MODEL,
                   spot: Optional[SpotEquilibrium] = None):
    """Revenue-maximising PAYG price: grid scan over ``(0, mu v1]`` then golden-section
    refinement between the best grid point's neighbours.

    Returns ``(p_star, RevenueReport)``.
    """
    regime = Regime(regime)
    validate(params)
    if spot is None:
        spot = solve_spot_cutoffs(params, model)
    if regime is Regime.PAYG_ONLY:
        f = lambda p: revenue_payg(p, params).revenue_rate
        report = lambda p: revenue_payg(p, params)
    elif regime is Regime.HYBRID:
        curve = _HybridCurve(params, model, spot)
        f, report = curve, curve.report
    else:
        raise ValueError("only PaygOnly and Hybrid have a price to optimise")
    grid = price_grid(params, spot, n_grid)
    values = np.array([f(p) for p in grid])
    j = int(np.argmax(values))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    p_ref, r_ref = golden_max(f, float(lo), float(hi))
    p_star = p_ref if r_ref > values[j] else float(grid[j])
    return p_star, report(p_star)


# -- ranking study --------------------------------------------------------------

@dataclass(frozen=True)
class Sampler:
    """Random configuration generator: ``mu = 1``, uniform costs,
    ``v2 ~ U(v2_range)``, ``v1 = v2 * U(v1_ratio)``, ``lambda_i ~ U(lambda_range)``,
    ``k`` uniform on ``k_choices``."""

    v2_range: tuple = (0.5, 2.0)
    v1_ratio: tuple = (1.1, 3.0)
    lambda_range: tuple = (0.2, 3.0)
    k_choices: tuple = tuple(range(1, 9))
    dist: str = "uniform"

    def draw(self, rng: np.random.Generator) -> MarketParams:
        v2 = rng.uniform(*self.v2_range)
        v1 = v2 * rng.uniform(*self.v1_ratio)
        lam1, lam2 = rng.uniform(*self.lambda_range, size=2)
        k = int(rng.choice(self.k_choices))
        return market(mu=1.0, k=k, v1=v1, lambda1=lam1, dist1=self.dist, v2=v2, lambda2=lam2, dist2=self.dist)


STUDY_COLUMNS = ("config_id", "v1", "v2", "lambda1", "lambda2", "k", "p_star_payg", "R_payg", "R_spot",
                 "p_star_hybrid", "R_hybrid", "hybrid_case", "ranking_holds")


@dataclass(frozen=True)
class StudyRow:
    config_id: int
    v1: float
    v2: float
    lambda1: float
    lambda2: float
    k: int
    p_star_payg: float
    R_payg: float
    R_spot: float
    p_star_hybrid: float
    R_hybrid: float
    hybrid_case: str
    ranking_holds: bool


def study_row(config_id: int, params: MarketParams, n_grid: int = N_GRID,
              model: WaitingTimeModel = DEFAULT_MODEL) -> StudyRow:
    spot = solve_spot_cutoffs(params, model)
    p_payg, r_payg = optimize_price(Regime.PAYG_ONLY, params, n_grid, model, spot)
    p_h, r_h = optimize_price(Regime.HYBRID, params, n_grid, model, spot)
    r_spot = revenue_spot(params, spot, model)
    return StudyRow(config_id, params.class1.value, params.class2.value, params.class1.arrival_rate,
                    params.class2.arrival_rate, params.num_servers, p_payg, r_payg.revenue_rate,
                    r_spot.revenue_rate, p_h, r_h.revenue_rate, r_h.equilibrium.case_tag.value,
                    bool(r_payg.revenue_rate > r_h.revenue_rate))


def revenue_ranking_study(n_configs: int, sampler: Sampler = Sampler(), seed: int = 0,
                          n_grid: int = N_GRID, model: WaitingTimeModel = DEFAULT_MODEL, n_jobs: int = 1):
    """Optimal PAYG vs optimal hybrid revenue on ``n_configs`` random markets.

    Row ``j`` is drawn from its own child seed of ``seed``, so rows do not
    depend on each other or on execution order.
    """
    if n_configs < 1:
        raise ValueError("n_configs must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_configs)
    configs = [sampler.draw(np.random.default_rng(s)) for s in children]
    if n_jobs == 1:
        return [study_row(j, p, n_grid, model) for j, p in enumerate(configs)]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(study_row, range(n_configs), configs, [n_grid] * n_configs, [model] * n_configs))


def write_study_csv(rows, fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=STUDY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        d = asdict(row)
        d["ranking_holds"] = str(d["ranking_holds"]).lower()
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in d.items()})
    return buf.getvalue() if fh is None else ""
