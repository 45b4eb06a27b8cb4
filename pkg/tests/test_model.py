import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from cloudprice import model as m
from conftest import any_dist, markets


def test_reference_market_is_valid(ref):
    m.validate(ref)
    assert ref.rho == (0.5, 0.5)
    assert (ref.upper(1), ref.upper(2)) == (2.0, 1.0)


@pytest.mark.parametrize("changes, needle", [
    ({"v2": 2.0}, "v1 > v2 violated"),
    ({"v2": 3.0}, "v1 > v2 violated"),
    ({"mu": 0.0}, "service_rate > 0 violated"),
    ({"lambda1": -1.0}, "lambda1 > 0 violated"),
    ({"k": 0}, "num_servers >= 1 violated"),
])
def test_validate_rejects(ref, changes, needle):
    with pytest.raises(m.InvalidParams) as info:
        m.validate(ref.replace(**changes))
    assert any(needle in v for v in info.value.violations)


def test_validate_reports_every_violation(ref):
    bad = ref.replace(v2=5.0, lambda2=-1.0)
    with pytest.raises(m.InvalidParams) as info:
        m.validate(bad)
    assert len(info.value.violations) == 2


def test_support_mismatch_detected(ref):
    cl = m.ClassParams(2.0, 1.0, m.Uniform(1.5))
    bad = m.MarketParams(1.0, 2, cl, ref.class2)
    with pytest.raises(m.InvalidParams, match="dist1 support mismatch"):
        m.validate(bad)


@pytest.mark.parametrize("dist, c, expected", [
    (m.Uniform(1.0), 0.5, 0.5),
    (m.Uniform(2.0), 0.5, 0.25),
    (m.Uniform(2.0), -1.0, 0.0),
    (m.Uniform(2.0), 3.0, 1.0),
    (m.TruncatedExponential(1.0, 1.0), 0.5, (1 - math.exp(-0.5)) / (1 - math.exp(-1))),
    (m.TruncatedExponential(1.0, 1.0), 1.0, 1.0),
])
def test_cdf_examples(dist, c, expected):
    assert dist.cdf(c) == pytest.approx(expected, abs=1e-15)
    assert float(dist.cdf(np.array([c]))[0]) == pytest.approx(expected, abs=1e-15)


def test_texp_cdf_value():
    assert m.TruncatedExponential(1.0, 1.0).cdf(0.5) == pytest.approx(0.6224593312, abs=1e-10)


@given(rate=st.floats(0.1, 8.0), upper=st.floats(0.2, 5.0), q=st.floats(0.0, 1.0))
def test_texp_cdf_is_integral_of_pdf(rate, upper, q):
    d = m.TruncatedExponential(rate, upper)
    c = q * upper
    val, _ = integrate.quad(d.pdf, 0.0, c, epsabs=1e-13, epsrel=1e-13)
    assert val == pytest.approx(d.cdf(c), abs=1e-9)


@given(rate=st.floats(0.1, 8.0), upper=st.floats(0.2, 5.0), q=st.floats(0.0, 1.0))
def test_ppf_inverts_cdf(rate, upper, q):
    d = m.TruncatedExponential(rate, upper)
    assert d.cdf(float(d.ppf(q))) == pytest.approx(q, abs=1e-12)


@given(dist=st.sampled_from([m.Uniform(1.5), m.TruncatedExponential(2.0, 1.5), m.TruncatedExponential(0.3, 4.0)]),
       lo=st.floats(-0.5, 5.0), hi=st.floats(-0.5, 5.0))
def test_mass_between_is_cdf_difference(dist, lo, hi):
    want = max(dist.cdf(hi) - dist.cdf(lo), 0.0)
    assert dist.mass_between(lo, hi) == pytest.approx(want, abs=1e-15)
    assert dist.mass_between(np.array([lo]), hi)[0] == pytest.approx(want, abs=1e-15)


def test_mass_between_far_tail():
    # both cdf values sit within a few ulps of 1, so their difference is mostly rounding
    d = m.TruncatedExponential(5.0, 8.0)
    lo, hi = 7.0, 7.05
    exact = (math.exp(-5 * lo) - math.exp(-5 * hi)) / -math.expm1(-40.0)
    assert abs(d.cdf(hi) - d.cdf(lo) - exact) > 0.1 * exact
    assert d.mass_between(lo, hi) == pytest.approx(exact, rel=1e-14)


@pytest.mark.parametrize("dist", [m.Uniform(1.5), m.TruncatedExponential(2.0, 1.5), m.TruncatedExponential(0.3, 4.0)])
def test_sampling_matches_cdf(dist):
    x = dist.sample(np.random.default_rng(11), 100_000)
    assert x.min() >= 0.0 and x.max() <= dist.upper
    ks = stats.kstest(x, lambda c: dist.cdf(np.asarray(c, dtype=float)))
    assert ks.statistic < 0.01


@pytest.mark.parametrize("spec", ["uniform", "texp:2", "texp:0.5", " Uniform "])
def test_make_distribution(spec):
    d = m.make_distribution(spec, 3.0)
    assert d.upper == 3.0
    assert m.make_distribution(d.spec(), 3.0) == d


@pytest.mark.parametrize("spec", ["normal", "texp:", "texp:-1", "texp:0", "texp:abc"])
def test_make_distribution_rejects(spec):
    with pytest.raises(m.InvalidParams):
        m.make_distribution(spec, 1.0)


@given(markets(dist=any_dist))
def test_flat_round_trip(params):
    assert m.from_flat(m.to_flat(params)) == params
    assert m.parse_config(m.format_config(params)) == params


def test_replace_reanchors_support(ref):
    p = ref.replace(mu=2.0)
    m.validate(p)
    assert p.class1.cost_dist.upper == 4.0


CONFIG = """
# reference market
mu = 1
k = 2
v1 = 2       # class 1
lambda1 = 1
dist1 = uniform
v2: 1
lambda2: 1
dist2: texp:2
"""


def test_parse_config():
    p = m.parse_config(CONFIG)
    assert p.num_servers == 2
    assert p.class2.cost_dist == m.TruncatedExponential(2.0, 1.0)
    m.validate(p)


def test_load_config(tmp_path):
    path = tmp_path / "market.cfg"
    path.write_text(CONFIG)
    assert m.load_config(path) == m.parse_config(CONFIG)


@pytest.mark.parametrize("extra, needle", [
    ("colour = red\n", "unknown key"),
    ("mu = 3\n", "duplicate key"),
    ("just words\n", "expected 'key = value'"),
])
def test_parse_config_errors(extra, needle):
    with pytest.raises(m.InvalidParams, match=needle):
        m.parse_config(CONFIG + extra)


def test_parse_config_missing_keys():
    with pytest.raises(m.InvalidParams, match="missing keys: lambda2, dist2"):
        m.parse_config("mu=1\nk=2\nv1=2\nlambda1=1\ndist1=uniform\nv2=1\n")


def test_parse_config_bad_number():
    with pytest.raises(m.InvalidParams):
        m.parse_config(CONFIG.replace("k = 2", "k = two"))


def test_cutoff_vector():
    c = m.CutoffVector(0.3, 0.7)
    assert c.hi == 0.7
    assert tuple(c) == (0.3, 0.7)
    assert c[1] == 0.7
