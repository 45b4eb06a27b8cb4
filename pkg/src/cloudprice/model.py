"""Market primitives: cost distributions, class and market parameters, cutoffs.

Everything here is immutable. Construction does not validate; call
:func:`validate` (the solvers do this at their entry points) so that invalid
parameter sets can still be built and inspected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

SUPPORT_RTOL = 1e-12


class InvalidParams(ValueError):
    """Raised with the full list of violated invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class Unstable(ArithmeticError):
    """The spot market load at the given cutoffs is at or above capacity."""


class OutOfRange(ValueError):
    pass


class InvalidPrice(ValueError):
    pass


class SolverError(RuntimeError):
    """A root or maximum could not be bracketed or did not converge."""


@dataclass(frozen=True)
class Uniform:
    """Uniform waiting cost on ``[0, upper]``."""

    upper: float
    kind: str = "uniform"

    def cdf(self, c: ArrayLike) -> ArrayLike:
        if isinstance(c, np.ndarray):
            return np.minimum(np.maximum(c, 0.0), self.upper) / self.upper
        if c <= 0.0:
            return 0.0
        if c >= self.upper:
            return 1.0
        return c / self.upper

    def mass_between(self, lo: ArrayLike, hi: float) -> ArrayLike:
        """``P(lo < X <= hi)``, zero where ``lo >= hi``."""
        hi = min(max(hi, 0.0), self.upper)
        if isinstance(lo, np.ndarray):
            return np.maximum(hi - np.maximum(lo, 0.0), 0.0) / self.upper
        return max(hi - max(lo, 0.0), 0.0) / self.upper

    def pdf(self, c: ArrayLike) -> ArrayLike:
        if isinstance(c, np.ndarray):
            return np.where((c >= 0.0) & (c <= self.upper), 1.0 / self.upper, 0.0)
        return 1.0 / self.upper if 0.0 <= c <= self.upper else 0.0

    def ppf(self, q: ArrayLike) -> ArrayLike:
        return np.clip(q, 0.0, 1.0) * self.upper

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(0.0, self.upper, size)

    def spec(self) -> str:
        return "uniform"


@dataclass(frozen=True)
class TruncatedExponential:
    """Exponential(rate) waiting cost conditioned on ``[0, upper]``."""

    rate: float
    upper: float
    kind: str = "texp"

    @cached_property
    def _mass(self) -> float:
        return -math.expm1(-self.rate * self.upper)

    def cdf(self, c: ArrayLike) -> ArrayLike:
        if isinstance(c, np.ndarray):
            x = np.minimum(np.maximum(c, 0.0), self.upper)
            return np.expm1(-self.rate * x) / -self._mass
        if c <= 0.0:
            return 0.0
        if c >= self.upper:
            return 1.0
        return -math.expm1(-self.rate * c) / self._mass

    def mass_between(self, lo: ArrayLike, hi: float) -> ArrayLike:
        """``P(lo < X <= hi)``, zero where ``lo >= hi``.

        Written as ``e^{-r lo} (1 - e^{-r (hi - lo)})`` so it keeps full
        relative accuracy where both cdf values round to 1.
        """
        r = self.rate
        hi = min(max(hi, 0.0), self.upper)
        if isinstance(lo, np.ndarray):
            x = np.minimum(np.maximum(lo, 0.0), hi)
            return np.exp(-r * x) * -np.expm1(-r * (hi - x)) / self._mass
        x = min(max(lo, 0.0), hi)
        return math.exp(-r * x) * -math.expm1(-r * (hi - x)) / self._mass

    def pdf(self, c: ArrayLike) -> ArrayLike:
        if isinstance(c, np.ndarray):
            inside = (c >= 0.0) & (c <= self.upper)
            return np.where(inside, self.rate * np.exp(-self.rate * np.clip(c, 0.0, self.upper)) / self._mass, 0.0)
        if c < 0.0 or c > self.upper:
            return 0.0
        return self.rate * math.exp(-self.rate * c) / self._mass

    def ppf(self, q: ArrayLike) -> ArrayLike:
        q = np.clip(q, 0.0, 1.0)
        return -np.log1p(-q * self._mass) / self.rate

    def sample(self, rng: np.random.Generator, size=None):
        # inverse-CDF sampling keeps draws inside the support exactly
        return np.minimum(self.ppf(rng.uniform(0.0, 1.0, size)), self.upper)

    def spec(self) -> str:
        return f"texp:{self.rate!r}"


CostDistribution = Union[Uniform, TruncatedExponential]


def make_distribution(spec: str, upper: float) -> CostDistribution:
    """Build a distribution from its config string (``uniform`` or ``texp:<rate>``)."""
    spec = spec.strip().lower()
    if spec == "uniform":
        return Uniform(upper)
    if spec.startswith("texp:"):
        try:
            rate = float(spec.split(":", 1)[1])
        except ValueError:
            raise InvalidParams([f"bad texp rate in {spec!r}"]) from None
        if not rate > 0:
            raise InvalidParams([f"texp rate must be > 0, got {rate}"])
        return TruncatedExponential(rate, upper)
    raise InvalidParams([f"unknown distribution {spec!r}"])


@dataclass(frozen=True)
class ClassParams:
    value: float
    arrival_rate: float
    cost_dist: CostDistribution


@dataclass(frozen=True)
class MarketParams:
    service_rate: float
    num_servers: int
    class1: ClassParams
    class2: ClassParams

    @property
    def classes(self) -> tuple[ClassParams, ClassParams]:
        return (self.class1, self.class2)

    @property
    def rho(self) -> tuple[float, float]:
        """Per-class offered load ``lambda_i / (k mu)`` if every job joined the spot market."""
        kmu = self.num_servers * self.service_rate
        return (self.class1.arrival_rate / kmu, self.class2.arrival_rate / kmu)

    def upper(self, i: int) -> float:
        """Top of class ``i``'s cost support, ``mu * v_i`` (``i`` is 1 or 2)."""
        return self.service_rate * self.classes[i - 1].value

    def all_uniform(self) -> bool:
        return all(isinstance(cl.cost_dist, Uniform) for cl in self.classes)

    def replace(self, **changes) -> "MarketParams":
        """Rebuild with scalar overrides; distributions are re-anchored to the new ``mu * v_i``.

        Accepted keys: ``mu, k, v1, v2, lambda1, lambda2, dist1, dist2``.
        """
        flat = to_flat(self)
        flat.update(changes)
        return from_flat(flat)


@dataclass(frozen=True)
class CutoffVector:
    c1: float
    c2: float

    @property
    def hi(self) -> float:
        return max(self.c1, self.c2)

    def __iter__(self):
        return iter((self.c1, self.c2))

    def __getitem__(self, i):
        return (self.c1, self.c2)[i]


def market(mu=1.0, k=2, v1=2.0, lambda1=1.0, dist1="uniform", v2=1.0, lambda2=1.0, dist2="uniform") -> MarketParams:
    """Convenience constructor; cost supports are set to ``[0, mu * v_i]``."""
    return MarketParams(
        service_rate=float(mu),
        num_servers=int(k),
        class1=ClassParams(float(v1), float(lambda1), make_distribution(dist1, mu * v1)),
        class2=ClassParams(float(v2), float(lambda2), make_distribution(dist2, mu * v2)),
    )


def reference_market() -> MarketParams:
    """mu=1, k=2, lambda1=lambda2=1, v1=2, v2=1, uniform costs."""
    return market()


def to_flat(params: MarketParams) -> dict:
    return {
        "mu": params.service_rate,
        "k": params.num_servers,
        "v1": params.class1.value,
        "lambda1": params.class1.arrival_rate,
        "dist1": params.class1.cost_dist.spec(),
        "v2": params.class2.value,
        "lambda2": params.class2.arrival_rate,
        "dist2": params.class2.cost_dist.spec(),
    }


def from_flat(flat: dict) -> MarketParams:
    return market(
        mu=float(flat["mu"]),
        k=int(flat["k"]),
        v1=float(flat["v1"]),
        lambda1=float(flat["lambda1"]),
        dist1=str(flat["dist1"]),
        v2=float(flat["v2"]),
        lambda2=float(flat["lambda2"]),
        dist2=str(flat["dist2"]),
    )


def validate(params: MarketParams) -> None:
    """Raise :class:`InvalidParams` listing every violated invariant."""
    errs = []
    mu, k = params.service_rate, params.num_servers
    if not mu > 0:
        errs.append(f"service_rate > 0 violated (mu={mu})")
    if int(k) != k or k < 1:
        errs.append(f"num_servers >= 1 violated (k={k})")
    for i, cl in enumerate(params.classes, start=1):
        if not cl.value > 0:
            errs.append(f"v{i} > 0 violated (v{i}={cl.value})")
        if not cl.arrival_rate > 0:
            errs.append(f"lambda{i} > 0 violated (lambda{i}={cl.arrival_rate})")
        dist = cl.cost_dist
        if isinstance(dist, TruncatedExponential) and not dist.rate > 0:
            errs.append(f"dist{i} rate > 0 violated")
        if mu > 0 and cl.value > 0:
            want = mu * cl.value
            if not math.isclose(dist.upper, want, rel_tol=SUPPORT_RTOL, abs_tol=0.0):
                errs.append(f"dist{i} support mismatch: [0, {dist.upper}] != [0, mu*v{i}] = [0, {want}]")
    if not params.class1.value > params.class2.value:
        errs.append(f"v1 > v2 violated (v1={params.class1.value}, v2={params.class2.value})")
    if errs:
        raise InvalidParams(errs)


def load_config(path) -> MarketParams:
    """Parse a key-value market file.

    One ``key = value`` (or ``key: value``) per line; ``#`` starts a comment;
    blank lines are ignored. Required keys: ``mu k v1 lambda1 dist1 v2
    lambda2 dist2``. Distribution values are ``uniform`` or ``texp:<rate>``.
    Unknown or duplicate keys are errors.
    """
    text = Path(path).read_text()
    return parse_config(text)


CONFIG_KEYS = ("mu", "k", "v1", "lambda1", "dist1", "v2", "lambda2", "dist2")


def parse_config(text: str, defaults: dict | None = None) -> MarketParams:
    flat = dict(defaults or {})
    seen = set()
    errs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        # "dist1: texp:2" splits on the first colon, which is what we want
        if sep is None:
            errs.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split(sep, 1))
        if key not in CONFIG_KEYS:
            errs.append(f"line {lineno}: unknown key {key!r}")
        elif key in seen:
            errs.append(f"line {lineno}: duplicate key {key!r}")
        else:
            seen.add(key)
            flat[key] = value
    missing = [k for k in CONFIG_KEYS if k not in flat]
    if missing:
        errs.append(f"missing keys: {', '.join(missing)}")
    if errs:
        raise InvalidParams(errs)
    try:
        return from_flat(flat)
    except ValueError as exc:
        if isinstance(exc, InvalidParams):
            raise
        raise InvalidParams([str(exc)]) from None


def format_config(params: MarketParams) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_flat(params).items())
