"""Equilibrium cutoffs and payments for the spot-only and hybrid markets.

Every residual below is monotone in its unknown, so all roots are found by
plain bisection. States past the stability boundary are mapped to an
infinite residual of the appropriate sign: the waiting-time integral blows up
there, so roots always lie strictly inside the stable region.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (CutoffVector, InvalidPrice, MarketParams, OutOfRange, SolverError, Unstable,
                    validate)
from .numerics import ROOT_TOL, adaptive_quad, bisect
from .waiting import DEFAULT_MODEL, STAB_EPS, ParallelMM1Priority, WaitingTimeModel, check_stable


class PriceCase(str, enum.Enum):
    LOW = "LowPrice"
    MID = "MidPrice"
    HIGH = "HighPrice"


@dataclass(frozen=True)
class SpotEquilibrium:
    cutoffs: CutoffVector
    common_threshold: float


@dataclass(frozen=True)
class HybridEquilibrium:
    price: float
    cutoffs: CutoffVector
    case_tag: PriceCase
    # per class: (lo, hi) cost interval that uses PAYG, or None
    payg_intervals: tuple


def _W(model, c, c1, c2, params):
    try:
        return model.cumulative(c, c1, c2, params)
    except Unstable:
        return math.inf


def solve_common_threshold(params: MarketParams, model: WaitingTimeModel = DEFAULT_MODEL,
                           tol: float = ROOT_TOL) -> float:
    """The cost ``x`` at which ``int_0^x w(t; x, x) dt = v2``."""
    validate(params)
    v2 = params.class2.value
    return bisect(lambda x: _W(model, x, x, x, params) - v2, 0.0, params.upper(2), tol=tol)


class _InnerCutoff:
    """``y(x1)``: the class-2 cutoff solving ``int_0^y w(t; x1, y) dt = v2``.

    ``y`` is decreasing in ``x1``, so once the outer search has narrowed
    ``x1`` to ``[a, b]`` the inner root lies in ``[y(b), y(a)]``; the solved
    values are cached and used to shrink each new inner bracket.
    """

    def __init__(self, params, cbar, model, tol):
        self.params, self.cbar, self.model, self.tol = params, cbar, model, tol
        self.v2 = params.class2.value
        self.cache = {cbar: cbar}

    def class1_alone_unstable(self, x1):
        return self.params.rho[0] * self.params.class1.cost_dist.cdf(x1) >= 1.0 - STAB_EPS

    def __call__(self, x1):
        if x1 in self.cache:
            return self.cache[x1]
        if x1 < self.cbar - 1e-12:
            raise OutOfRange(f"x1={x1} is below the common threshold {self.cbar}")
        lo, hi = 0.0, self.cbar
        for x, y in self.cache.items():
            if x <= x1:
                hi = min(hi, y)
            if x >= x1:
                lo = max(lo, y)
        model, params, v2 = self.model, self.params, self.v2
        f = lambda x2: _W(model, x2, x1, x2, params) - v2
        try:
            y = bisect(f, lo, hi, tol=self.tol)
        except SolverError:
            y = bisect(f, 0.0, self.cbar, tol=self.tol)
        self.cache[x1] = y
        return y


def inner_cutoff_y(x1: float, params: MarketParams, cbar: Optional[float] = None,
                   model: WaitingTimeModel = DEFAULT_MODEL, tol: float = ROOT_TOL) -> float:
    """Class-2 cutoff paired with class-1 cutoff ``x1`` so that class 2's marginal job breaks even."""
    if cbar is None:
        cbar = solve_common_threshold(params, model, tol)
    inner = _InnerCutoff(params, cbar, model, tol)
    if inner.class1_alone_unstable(x1):
        raise Unstable(f"class 1 alone overloads the spot market at x1={x1}")
    return inner(x1)


def solve_spot_cutoffs(params: MarketParams, model: WaitingTimeModel = DEFAULT_MODEL,
                       tol: float = ROOT_TOL, cbar: Optional[float] = None) -> SpotEquilibrium:
    """Spot market in isolation: each class's marginal participant breaks even."""
    if cbar is None:
        cbar = solve_common_threshold(params, model, tol)
    inner = _InnerCutoff(params, cbar, model, tol)
    v1 = params.class1.value

    def phi(x1):
        if inner.class1_alone_unstable(x1):
            return math.inf
        y = inner(x1)
        return _W(model, x1, x1, y, params) - v1

    c1 = bisect(phi, cbar, params.upper(1), tol=tol)
    return SpotEquilibrium(CutoffVector(c1, inner(c1)), cbar)


def _payg_intervals(params, cutoffs, p):
    out = []
    for i, ci in enumerate(cutoffs, start=1):
        top = params.upper(i) - p
        out.append((ci, top) if ci <= top else None)
    return tuple(out)


def price_case(p: float, params: MarketParams, spot: SpotEquilibrium) -> PriceCase:
    mu = params.service_rate
    if p <= mu * params.class2.value - spot.common_threshold:
        return PriceCase.LOW
    if p <= mu * params.class1.value - spot.cutoffs.c1:
        return PriceCase.MID
    return PriceCase.HIGH


def solve_hybrid_cutoffs(p: float, params: MarketParams, spot: Optional[SpotEquilibrium] = None,
                         model: WaitingTimeModel = DEFAULT_MODEL, tol: float = ROOT_TOL) -> HybridEquilibrium:
    """Cutoffs of the hybrid market when PAYG is sold at price ``p`` per unit time."""
    if not p > 0:
        raise InvalidPrice(f"PAYG price must be > 0, got {p}")
    if spot is None:
        validate(params)
        spot = solve_spot_cutoffs(params, model, tol)
    mu = params.service_rate
    cbar = spot.common_threshold
    case = price_case(p, params, spot)

    if case is PriceCase.LOW:
        def chi(x):
            return (p + x) / mu - _W(model, x, x, x, params)
        x = bisect(chi, 0.0, cbar, increasing=False, tol=tol)
        cutoffs = CutoffVector(x, x)
    elif case is PriceCase.MID:
        inner = _InnerCutoff(params, cbar, model, tol)
        inner.cache[spot.cutoffs.c1] = spot.cutoffs.c2

        def psi(x1):
            if inner.class1_alone_unstable(x1):
                return -math.inf
            return (p + x1) / mu - _W(model, x1, x1, inner(x1), params)
        x1 = bisect(psi, cbar, spot.cutoffs.c1, increasing=False, tol=tol)
        cutoffs = CutoffVector(x1, inner(x1))
    else:
        cutoffs = spot.cutoffs
    return HybridEquilibrium(p, cutoffs, case, _payg_intervals(params, cutoffs, p))


# -- payments -----------------------------------------------------------------

def expected_payment(c: float, cutoffs: CutoffVector, params: MarketParams,
                     model: WaitingTimeModel = DEFAULT_MODEL) -> float:
    """Expected payment of a participant with cost ``c``: ``int_0^c w - c w(c)``."""
    c1, c2 = cutoffs
    check_stable(c1, c2, params)
    if c < 0 or c > cutoffs.hi * (1 + 1e-12):
        raise OutOfRange(f"cost {c} is outside the participating range [0, {cutoffs.hi}]")
    return model.payment(c, c1, c2, params)


def cumulative_on_grid(grid: np.ndarray, cutoffs: CutoffVector, params: MarketParams,
                       model: WaitingTimeModel = DEFAULT_MODEL) -> np.ndarray:
    """``int_0^c w`` at every point of an increasing grid, integrating panel by panel."""
    c1, c2 = cutoffs
    check_stable(c1, c2, params)
    grid = np.asarray(grid, dtype=float)
    if isinstance(model, ParallelMM1Priority) and model.closed_form_available(params):
        return np.array([model.cumulative_closed(float(c), c1, c2, params) for c in grid])
    kinks = model.kinks(c1, c2, params)
    f = lambda t: model.wait(t, c1, c2, params)
    out = np.empty_like(grid)
    acc, prev = 0.0, 0.0
    for j, c in enumerate(grid):
        acc += adaptive_quad(f, prev, float(c), kinks)
        out[j] = acc
        prev = float(c)
    return out


def payment_curve(grid: np.ndarray, cutoffs: CutoffVector, params: MarketParams,
                  model: WaitingTimeModel = DEFAULT_MODEL) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    return cumulative_on_grid(grid, cutoffs, params, model) - grid * model.wait(grid, cutoffs.c1, cutoffs.c2, params)


def audit_incentive_compatibility(cutoffs: CutoffVector, params: MarketParams, grid_size: int = 512,
                                  model: WaitingTimeModel = DEFAULT_MODEL,
                                  payment: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> float:
    """Largest gain any grid type gets from misreporting to another grid type.

    ``payment`` overrides the payment rule (used for negative controls).
    """
    if cutoffs.hi <= 0.0:
        return 0.0
    grid = np.linspace(0.0, cutoffs.hi, grid_size)
    w = model.wait(grid, cutoffs.c1, cutoffs.c2, params)
    m = payment(grid) if payment is not None else payment_curve(grid, cutoffs, params, model)
    # cost[t, r]: expected waiting cost plus payment of a true type t reporting r
    cost = grid[:, None] * w[None, :] + m[None, :]
    truthful = np.diag(cost)
    return float(np.max(truthful - cost.min(axis=1)))


def audit_participation(eq, params: MarketParams, grid_size: int = 512,
                        model: WaitingTimeModel = DEFAULT_MODEL) -> float:
    """Worst violation of the participation constraints on a cost grid.

    Works for both :class:`SpotEquilibrium` and :class:`HybridEquilibrium`.
    For the spot market the above-cutoff check is that no misreport gives a
    non-participating type a positive payoff.
    """
    cutoffs = eq.cutoffs
    c1, c2 = cutoffs
    price = getattr(eq, "price", None)
    mu = params.service_rate
    worst = 0.0
    report_grid = np.linspace(0.0, cutoffs.hi, grid_size)
    report_cost_w = model.wait(report_grid, c1, c2, params)
    report_m = payment_curve(report_grid, cutoffs, params, model)

    for i, cl in enumerate(params.classes, start=1):
        v, ci, top = cl.value, (c1, c2)[i - 1], params.upper(i)
        below = np.linspace(0.0, ci, grid_size, endpoint=False)
        spot = v - cumulative_on_grid(below, cutoffs, params, model)
        worst = max(worst, float(np.max(np.maximum(-spot, 0.0))))
        spot_at = v - model.cumulative(ci, c1, c2, params)
        if price is None:
            worst = max(worst, abs(spot_at))
            above = np.linspace(ci, top, grid_size)[1:]
            if above.size:
                best = np.max(v - above[:, None] * report_cost_w[None, :] - report_m[None, :], axis=1)
                worst = max(worst, float(np.max(np.maximum(best, 0.0))))
            continue

        payg_below = v - (price + below) / mu
        worst = max(worst, float(np.max(np.maximum(payg_below - spot, 0.0))))
        payg_at = v - (price + ci) / mu
        hi = top - price
        seg = np.linspace(ci, hi, grid_size) if hi >= ci else np.empty(0)
        payg_seg = v - (price + seg) / mu
        # either class i deserts PAYG with its marginal spot job breaking even...
        viol_a = max(abs(spot_at), payg_at if hi > ci else 0.0)
        # ...or its marginal job is indifferent and costlier types weakly prefer PAYG
        viol_b = abs(spot_at - payg_at)
        if seg.size:
            spot_seg = v - cumulative_on_grid(seg, cutoffs, params, model)
            viol_b = max(viol_b, float(np.max(np.maximum(spot_seg - payg_seg, 0.0))),
                         float(np.max(np.maximum(-payg_seg, 0.0))))
        worst = max(worst, min(viol_a, viol_b))
    return worst
