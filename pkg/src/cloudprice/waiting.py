"""Waiting-time function of the spot market.

A waiting-time model maps a job's cost ``c`` and the participation cutoffs
``(c1, c2)`` to the expected sojourn time of that job. The solvers only rely
on the monotonicity contract documented on :class:`WaitingTimeModel`; the one
shipped instance is :class:`ParallelMM1Priority` (``k`` parallel M/M/1 queues,
uniform random routing, preemptive-resume priority by bid).
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from .model import CutoffVector, MarketParams, Unstable, Uniform
from .numerics import QUAD_TOL, _gauss, adaptive_quad

STAB_EPS = 1e-9


class WaitingTimeModel(ABC):
    """Contract every waiting-time model must satisfy.

    * ``wait(c) == 1/mu`` once ``c >= max(c1, c2)``, and ``> 1/mu`` below it;
    * nonincreasing in ``c``, nondecreasing in each cutoff;
    * depends on the cutoffs only through the load of higher-cost participants,
      so moving ``c2`` below ``t`` leaves ``wait(t)`` unchanged;
    * ``wait`` accepts a float or a numpy array of costs (quadrature calls it
      on arrays).

    Methods take the cutoffs as two floats because they sit inside nested
    root-finding loops.
    """

    has_closed_form_integral: bool = False

    @abstractmethod
    def wait(self, c, c1: float, c2: float, params: MarketParams):
        """Expected sojourn time; ``c`` may be a float or an array."""

    def kinks(self, c1: float, c2: float, params: MarketParams) -> tuple:
        return (c1, c2, params.upper(1), params.upper(2))

    def cumulative(self, c: float, c1: float, c2: float, params: MarketParams) -> float:
        """``int_0^c wait(t) dt``."""
        return self.cumulative_quad(c, c1, c2, params)

    def cumulative_quad(self, c, c1, c2, params, tol=QUAD_TOL) -> float:
        check_stable(c1, c2, params)
        return adaptive_quad(lambda t: self.wait(t, c1, c2, params), 0.0, c, self.kinks(c1, c2, params), tol)

    def payment(self, c: float, c1: float, c2: float, params: MarketParams) -> float:
        """Revenue-equivalence payment ``int_0^c w - c w(c)``."""
        return self.cumulative(c, c1, c2, params) - c * self.wait(c, c1, c2, params)

    def payment_integral(self, i: int, c: float, c1: float, c2: float, params: MarketParams,
                         tol: float = QUAD_TOL) -> float:
        """``int_0^c payment(t) f_i(t) dt`` for class ``i``.

        Integrating the ``W f`` part by parts leaves a single quadrature:
        ``W(c) F(c) - int_0^c w(t) (F(t) + t f(t)) dt``.
        """
        dist = params.classes[i - 1].cost_dist
        g = lambda t: self.wait(t, c1, c2, params) * (dist.cdf(t) + t * dist.pdf(t))
        rest = adaptive_quad(g, 0.0, c, self.kinks(c1, c2, params), tol)
        return self.cumulative(c, c1, c2, params) * dist.cdf(c) - rest


def load_above(c, c1: float, c2: float, params: MarketParams):
    """Normalised arrival rate of participants with cost above ``c``."""
    cl1, cl2 = params.class1, params.class2
    kmu = params.num_servers * params.service_rate
    d1, d2 = cl1.cost_dist, cl2.cost_dist
    return cl1.arrival_rate / kmu * d1.mass_between(c, c1) + cl2.arrival_rate / kmu * d2.mass_between(c, c2)


def spot_load(c1: float, c2: float, params: MarketParams) -> float:
    """Total spot-market utilisation ``(lambda1 F1(c1) + lambda2 F2(c2)) / (k mu)``."""
    return load_above(0.0, c1, c2, params)


def check_stable(c1: float, c2: float, params: MarketParams) -> float:
    load = spot_load(c1, c2, params)
    if load >= 1.0 - STAB_EPS:
        raise Unstable(f"spot load {load:.12g} at cutoffs ({c1:.6g}, {c2:.6g}) is not below 1")
    return load


class ParallelMM1Priority(WaitingTimeModel):
    """``w(c) = 1 / (mu (1 - load_above(c))^2)``.

    With uniform costs the load is piecewise linear in ``c`` so both
    ``int w`` and ``int t w`` have closed forms; ``use_closed_form=False``
    forces the quadrature route everywhere.
    """

    has_closed_form_integral = True

    def __init__(self, use_closed_form: bool = True):
        self.use_closed_form = use_closed_form

    def __repr__(self):
        return f"ParallelMM1Priority(use_closed_form={self.use_closed_form})"

    def wait(self, c, c1, c2, params):
        load = load_above(c, c1, c2, params)
        if isinstance(load, np.ndarray):
            if np.any(load >= 1.0 - STAB_EPS):
                raise Unstable("spot load is not below 1")
        elif load >= 1.0 - STAB_EPS:
            raise Unstable(f"spot load {load:.12g} is not below 1")
        d = 1.0 - load
        return 1.0 / (params.service_rate * d * d)

    def closed_form_available(self, params: MarketParams) -> bool:
        return self.use_closed_form and params.all_uniform()

    def cumulative(self, c, c1, c2, params):
        if self.closed_form_available(params):
            return self.cumulative_closed(c, c1, c2, params)
        return self.cumulative_quad(c, c1, c2, params)

    def _segments(self, c, c1, c2, params):
        """Yield ``(lo, hi, a, b)`` with ``1 - load(t) = a + b t`` on ``[lo, hi]``."""
        u1, u2 = params.upper(1), params.upper(2)
        r1, r2 = params.rho
        e1 = min(max(c1, 0.0), u1)
        e2 = min(max(c2, 0.0), u2)
        s1, s2 = r1 / u1, r2 / u2
        a0 = 1.0 - s1 * e1 - s2 * e2
        if a0 <= STAB_EPS:
            raise Unstable(f"spot load {1.0 - a0:.12g} at cutoffs ({c1:.6g}, {c2:.6g}) is not below 1")
        if e1 <= e2:
            first, second, s_hi, e_lo = e1, e2, s2, e1
            a1 = 1.0 - s2 * e2
        else:
            first, second, s_hi, e_lo = e2, e1, s1, e2
            a1 = 1.0 - s1 * e1
        # load is zero past the larger effective cutoff
        yield 0.0, min(c, first), a0, s1 + s2
        if c > first:
            yield first, min(c, second), a1, s_hi
        if c > second:
            yield second, c, 1.0, 0.0

    def cumulative_closed(self, c, c1, c2, params):
        mu = params.service_rate
        total = 0.0
        for lo, hi, a, b in self._segments(c, c1, c2, params):
            if hi <= lo:
                continue
            # (1/D(lo) - 1/D(hi)) / b, rearranged so that a tiny slope does not cancel
            total += (hi - lo) / ((a + b * lo) * (a + b * hi))
        return total / mu

    def first_moment_closed(self, c, c1, c2, params):
        """``int_0^c t w(t) dt`` in closed form (uniform costs)."""
        mu = params.service_rate
        total = 0.0
        for lo, hi, a, b in self._segments(c, c1, c2, params):
            if hi <= lo:
                continue
            dlo, dhi = a + b * lo, a + b * hi
            if abs(b) * (hi - lo) < 0.5 * dlo:
                # the closed form cancels badly for shallow segments; the
                # integrand's pole is then far away and Gauss-Legendre is exact
                total += _gauss(lambda t: t / (a + b * t) ** 2, lo, hi)
            else:
                total += (math.log(dhi / dlo) + a / dhi - a / dlo) / (b * b)
        return total / mu

    def payment_integral(self, i, c, c1, c2, params, tol=QUAD_TOL):
        dist = params.classes[i - 1].cost_dist
        if self.closed_form_available(params) and isinstance(dist, Uniform):
            # int_0^c m = c W(c) - 2 int_0^c t w(t) dt, then times the flat density
            c_in = min(c, dist.upper)
            integral = c_in * self.cumulative_closed(c_in, c1, c2, params) - 2.0 * self.first_moment_closed(c_in, c1, c2, params)
            return integral / dist.upper
        return super().payment_integral(i, c, c1, c2, params, tol)


DEFAULT_MODEL = ParallelMM1Priority()


def _cut(cutoffs):
    return (cutoffs.c1, cutoffs.c2) if isinstance(cutoffs, CutoffVector) else tuple(cutoffs)


def residual_load(c, cutoffs, params: MarketParams):
    """Normalised load of participants with cost above ``c``; raises if the market is unstable."""
    c1, c2 = _cut(cutoffs)
    check_stable(c1, c2, params)
    return load_above(c, c1, c2, params)


def waiting_time(c, cutoffs, params: MarketParams, model: WaitingTimeModel = DEFAULT_MODEL):
    c1, c2 = _cut(cutoffs)
    check_stable(c1, c2, params)
    return model.wait(c, c1, c2, params)


def cumulative_wait(c: float, cutoffs, params: MarketParams, model: WaitingTimeModel = DEFAULT_MODEL,
                    method: str = "auto") -> float:
    """``int_0^c w(t; c1, c2) dt``.

    ``method`` is ``"auto"`` (the model's preferred route), ``"quad"`` or
    ``"closed"`` (uniform costs with :class:`ParallelMM1Priority` only).
    """
    c1, c2 = _cut(cutoffs)
    check_stable(c1, c2, params)
    if method == "quad":
        return model.cumulative_quad(c, c1, c2, params)
    if method == "closed":
        if not (isinstance(model, ParallelMM1Priority) and params.all_uniform()):
            raise ValueError("closed form needs uniform costs and the parallel M/M/1 model")
        return model.cumulative_closed(c, c1, c2, params)
    return model.cumulative(c, c1, c2, params)
