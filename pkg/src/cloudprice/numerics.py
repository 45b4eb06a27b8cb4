"""Small numerical kernels: residual-tolerance bisection, kink-aware adaptive
Gauss-Legendre quadrature, and golden-section maximisation."""
from __future__ import annotations

import heapq
import math
from typing import Callable, Iterable

import numpy as np

from .model import SolverError

ROOT_TOL = 1e-9
MAX_BISECT = 200
QUAD_TOL = 1e-10
QUAD_RTOL = 1e-13
QUAD_MAX_PANELS = 400

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def bisect(f: Callable[[float], float], lo: float, hi: float, increasing: bool = True,
           tol: float = ROOT_TOL, maxiter: int = MAX_BISECT, f_lo=None, f_hi=None) -> float:
    """Root of a monotone ``f`` on ``[lo, hi]``.

    Stops when ``|f(x)| <= tol`` or the bracket can no longer be halved in
    floating point. ``f`` may return +-inf (e.g. beyond a stability boundary);
    only its sign is used. If the sign change is missing at an endpoint the
    endpoint itself is returned when its residual is within ``tol``.
    """
    sgn = 1.0 if increasing else -1.0
    g_lo = sgn * (f(lo) if f_lo is None else f_lo)
    if g_lo >= -tol:
        if g_lo <= tol:
            return lo
        raise SolverError(f"no root in [{lo}, {hi}]: residual at lower end is {g_lo:+.3e}")
    g_hi = sgn * (f(hi) if f_hi is None else f_hi)
    if g_hi <= tol:
        if g_hi >= -tol:
            return hi
        raise SolverError(f"no root in [{lo}, {hi}]: residual at upper end is {g_hi:+.3e}")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        g = sgn * f(mid)
        if abs(g) <= tol:
            return mid
        if g < 0:
            lo = mid
        else:
            hi = mid
    raise SolverError(f"bisection did not converge in {maxiter} iterations")


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_G8_NODES, _G8_WEIGHTS = np.polynomial.legendre.leggauss(8)
_BOTH_NODES = np.concatenate([_GL_NODES, _G8_NODES])


def _gauss(f, a, b):
    """One 16-point Gauss-Legendre panel."""
    h = 0.5 * (b - a)
    return h * float(np.dot(_GL_WEIGHTS, f(a + h * (_GL_NODES + 1.0))))


def _gauss_pair(f, a, b):
    """16- and 8-point rules on one panel from a single call of ``f``."""
    h = 0.5 * (b - a)
    y = f(a + h * (_BOTH_NODES + 1.0))
    return h * float(np.dot(_GL_WEIGHTS, y[:16])), h * float(np.dot(_G8_WEIGHTS, y[16:]))


def adaptive_quad(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, breakpoints: Iterable[float] = (),
                  tol: float = QUAD_TOL, rtol: float = QUAD_RTOL, max_panels: int = QUAD_MAX_PANELS) -> float:
    """``int_a^b f`` for a vectorised ``f`` by globally adaptive Gauss-Legendre.

    Every breakpoint inside ``(a, b)`` is forced as a panel edge, so ``f``
    only needs to be smooth between breakpoints. Each panel's error is the
    gap between its 16- and 8-point values (a generous bound, as the 8-point
    rule is far cruder); the panel with the largest error is halved until the
    summed error is within ``tol`` or within ``rtol`` of the total. The
    relative test matters for the huge values met next to a singularity.
    ``max_panels`` caps the work when rounding noise in ``f`` itself keeps
    the estimate from ever meeting the tolerance.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_quad(f, b, a, breakpoints, tol, rtol, max_panels)
    edges = sorted({a, b, *(x for x in breakpoints if a < x < b)})
    heap = []
    total = err_sum = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        fine, coarse = _gauss_pair(f, lo, hi)
        err = abs(fine - coarse)
        heapq.heappush(heap, (-err, lo, hi, fine))
        total += fine
        err_sum += err
    while err_sum > max(tol, rtol * abs(total)) and len(heap) < max_panels:
        neg_err, lo, hi, fine = heapq.heappop(heap)
        total -= fine
        err_sum += neg_err
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # panel too narrow to split; keep it and stop refining
            heapq.heappush(heap, (neg_err, lo, hi, fine))
            total += fine
            err_sum -= neg_err
            break
        for x0, x1 in ((lo, mid), (mid, hi)):
            f16, f8 = _gauss_pair(f, x0, x1)
            e = abs(f16 - f8)
            heapq.heappush(heap, (-e, x0, x1, f16))
            total += f16
            err_sum += e
    # re-add in one pass so running-sum rounding does not leak into the result
    return math.fsum(item[3] for item in heap)


def golden_max(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-10, maxiter: int = 200):
    """Golden-section search for the maximum of a unimodal ``f`` on ``[lo, hi]``.

    Returns ``(x, f(x))``; the endpoints are also compared so that a maximum
    sitting on the bracket edge (a kink) is not lost.
    """
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(maxiter):
        if b - a <= xtol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    best = max(((x1, f1), (x2, f2), (lo, f(lo)), (hi, f(hi))), key=lambda t: t[1])
    return best
