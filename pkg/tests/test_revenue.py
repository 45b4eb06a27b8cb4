import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import oracle
from cloudprice import equilibrium as eq
from cloudprice import model as m
from cloudprice import revenue as rev
from cloudprice.equilibrium import PriceCase
from cloudprice.revenue import Regime
from conftest import any_dist, markets


@pytest.fixture
def ref_spot(ref):
    return eq.solve_spot_cutoffs(ref)


def payg_formula(p, lam1=1.0, lam2=1.0, v1=2.0, v2=1.0):
    # uniform costs on the reference supports, mu = 1
    return p * (lam1 * max(v1 - p, 0) / v1 + lam2 * max(v2 - p, 0) / v2)


@pytest.mark.parametrize("p, expected", [
    (2 / 3, 2 / 3),
    (0.2, 0.34),
    (1.0, 0.5),
    (1.5, 0.375),
    (2.0, 0.0),
    (7.0, 0.0),
])
def test_payg_examples(ref, p, expected):
    r = rev.revenue_payg(p, ref)
    assert r.revenue_rate == pytest.approx(expected, abs=1e-14)
    assert r.revenue_rate == pytest.approx(payg_formula(p), abs=1e-14)
    assert r.regime is Regime.PAYG_ONLY and r.spot == (0.0, 0.0)


def test_payg_kink_at_class2_value(ref):
    h = 1e-6
    R = lambda p: rev.revenue_payg(p, ref).revenue_rate
    left = (R(1.0) - R(1.0 - h)) / h
    right = (R(1.0 + h) - R(1.0)) / h
    # class 2 drops out: the slope jumps by lambda2 * p * f2 = 1
    assert left - right == pytest.approx(-1.0, abs=1e-4)
    assert rev.revenue_payg(1.0, ref).payg[1] == 0.0


@pytest.mark.parametrize("p", [0.0, -0.5])
def test_price_must_be_positive(ref, p):
    with pytest.raises(m.InvalidPrice):
        rev.revenue_payg(p, ref)
    with pytest.raises(m.InvalidPrice):
        rev.revenue_hybrid(p, ref)


def test_spot_revenue_reference(ref):
    r = rev.revenue_spot(ref)
    assert r.price is None
    # exact cutoffs in the oracle, solved ones (residual 1e-9) here
    assert r.revenue_rate == pytest.approx(oracle.spot_revenue(ref, 1.2, 0.4), abs=1e-8)
    assert r.revenue_rate == pytest.approx(sum(r.spot), abs=1e-15)


def _fine_payment(params, c1, c2, n=40001):
    """Payment curve from a dense cumulative Simpson rule, independent of the package."""
    hi = max(c1, c2)
    grid = np.linspace(0.0, hi, n)
    kmu = params.num_servers * params.service_rate
    load = sum(cl.arrival_rate / kmu * np.maximum(cl.cost_dist.cdf(ci) - cl.cost_dist.cdf(grid), 0.0)
               for cl, ci in zip(params.classes, (c1, c2)))
    w = 1.0 / (params.service_rate * (1.0 - load) ** 2)
    W = integrate.cumulative_simpson(w, x=grid, initial=0.0)
    return grid, W - grid * w


def test_spot_revenue_monte_carlo(ref, ref_spot):
    c1, c2 = ref_spot.cutoffs
    grid, pay = _fine_payment(ref, c1, c2)
    rng = np.random.default_rng(2024)
    n = 1_000_000
    est, var = 0.0, 0.0
    for cl, ci in zip(ref.classes, (c1, c2)):
        x = cl.cost_dist.sample(rng, n)
        y = cl.arrival_rate * np.where(x <= ci, np.interp(x, grid, pay), 0.0)
        est += y.mean()
        var += y.var(ddof=1) / n
    assert abs(rev.revenue_spot(ref, ref_spot).revenue_rate - est) <= 3 * np.sqrt(var)


def test_spot_revenue_empty_market_limit(ref):
    assert rev.revenue_spot(ref.replace(lambda1=1e-8, lambda2=1e-8)).revenue_rate < 1e-7


def test_spot_revenue_symmetric_limit(ref):
    # nearly identical classes: per-class revenue is proportional to the arrival rate
    p = ref.replace(v2=2.0 * (1 - 1e-9), lambda2=2.5)
    r = rev.revenue_spot(p)
    assert r.spot[0] / 1.0 == pytest.approx(r.spot[1] / 2.5, rel=1e-6)


@settings(max_examples=10)
@given(markets(dist=any_dist))
def test_spot_revenue_matches_oracle(params):
    spot = eq.solve_spot_cutoffs(params)
    got = rev.revenue_spot(params, spot).revenue_rate
    assert got == pytest.approx(oracle.spot_revenue(params, *spot.cutoffs), abs=1e-8)


# -- hybrid -----------------------------------------------------------------------

def test_hybrid_low_price_below_payg(ref, ref_spot):
    h = rev.revenue_hybrid(0.2, ref, ref_spot)
    assert h.equilibrium.case_tag is PriceCase.LOW
    assert h.revenue_rate < rev.revenue_payg(0.2, ref).revenue_rate == pytest.approx(0.34)


def test_hybrid_tiny_price(ref, ref_spot):
    assert rev.revenue_hybrid(1e-7, ref, ref_spot).revenue_rate < 1e-5


@pytest.mark.parametrize("p", [0.81, 1.0, 1.7, 2.5])
def test_hybrid_equals_spot_at_high_price(ref, ref_spot, p):
    assert rev.revenue_hybrid(p, ref, ref_spot).revenue_rate == rev.revenue_spot(ref, ref_spot).revenue_rate


@given(markets(dist=any_dist), st.floats(1e-3, 1.0))
def test_revenue_components(params, q):
    spot = eq.solve_spot_cutoffs(params)
    p = q * params.upper(1)
    h = rev.revenue_hybrid(p, params, spot)
    parts = h.components
    assert all(v >= 0 for v in parts.values())
    assert h.revenue_rate == pytest.approx(sum(parts.values()), abs=1e-14)


def check_hybrid_continuity(params, spot, n=400):
    curve = rev._HybridCurve(params, rev.DEFAULT_MODEL, spot)
    grid = rev.price_grid(params, spot, n)
    R = np.array([curve(p) for p in grid])
    steps = np.diff(grid)
    # Lipschitz-type bound: the jump between neighbours is O(step)
    assert np.all(np.abs(np.diff(R)) <= 50.0 * steps * max(1.0, R.max()))


@settings(max_examples=15)
@given(markets())
def test_hybrid_continuous_in_price(params):
    check_hybrid_continuity(params, eq.solve_spot_cutoffs(params))


# -- optimisation ---------------------------------------------------------------------

def test_optimize_payg_reference(ref):
    p, r = rev.optimize_price(Regime.PAYG_ONLY, ref)
    assert p == pytest.approx(2 / 3, abs=1e-6)
    assert r.revenue_rate == pytest.approx(2 / 3, abs=1e-12)


def test_optimize_single_class():
    params = m.market(v1=2.0, v2=0.1, lambda2=1e-12)
    p, _ = rev.optimize_price(Regime.PAYG_ONLY, params)
    assert p == pytest.approx(1.0, abs=1e-6)


def test_optimize_hybrid_reference(ref):
    _, payg = rev.optimize_price(Regime.PAYG_ONLY, ref)
    p, hyb = rev.optimize_price(Regime.HYBRID, ref)
    assert hyb.revenue_rate < payg.revenue_rate
    assert hyb.revenue_rate >= rev.revenue_spot(ref).revenue_rate
    assert p == pytest.approx(0.51165, abs=1e-4)


def test_optimize_rejects_spot_regime(ref):
    with pytest.raises(ValueError):
        rev.optimize_price(Regime.SPOT_ONLY, ref)


def test_breakpoints_in_grid(ref, ref_spot):
    grid = rev.price_grid(ref, ref_spot, 64)
    for b in (1.0, 3 / 7, 0.8):
        assert np.any(np.isclose(grid, b, atol=1e-8, rtol=0))


# -- ranking study ---------------------------------------------------------------------

def test_study_row_reference(ref):
    row = rev.study_row(0, ref)
    assert row.ranking_holds
    assert row.R_payg == pytest.approx(2 / 3, abs=1e-12)


def test_study_is_deterministic():
    a = rev.revenue_ranking_study(3, seed=5, n_grid=256)
    b = rev.revenue_ranking_study(3, seed=5, n_grid=256)
    assert a == b
    assert rev.revenue_ranking_study(3, seed=6, n_grid=256) != a


def test_study_rows_do_not_depend_on_count():
    few = rev.revenue_ranking_study(2, seed=9, n_grid=128)
    many = rev.revenue_ranking_study(3, seed=9, n_grid=128)
    assert few[0] == many[0]


def test_study_parallel_matches_serial():
    assert rev.revenue_ranking_study(2, seed=3, n_grid=128, n_jobs=2) == rev.revenue_ranking_study(2, seed=3, n_grid=128)


def test_study_rejects_empty():
    with pytest.raises(ValueError):
        rev.revenue_ranking_study(0)


def test_sampler_ranges():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = rev.Sampler().draw(rng)
        m.validate(p)
        ratio = p.class1.value / p.class2.value
        assert 0.5 <= p.class2.value <= 2.0 and 1.1 <= ratio <= 3.0
        assert 1 <= p.num_servers <= 8 and p.service_rate == 1.0


def test_study_csv_schema():
    rows = rev.revenue_ranking_study(2, seed=1, n_grid=128)
    text = rev.write_study_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert tuple(parsed[0].keys()) == rev.STUDY_COLUMNS
    assert [r["config_id"] for r in parsed] == ["0", "1"]
    assert {r["ranking_holds"] for r in parsed} <= {"true", "false"}
    assert float(parsed[0]["R_payg"]) == rows[0].R_payg
