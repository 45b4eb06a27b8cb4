import os

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from cloudprice import model as m

settings.register_profile(
    "repo", derandomize=True, deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

# lines collected by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def ref():
    return m.reference_market()


@st.composite
def markets(draw, dist=st.just("uniform"), mu=st.floats(0.5, 2.0)):
    """Valid markets drawn over the same ranges as the ranking-study sampler, with mu free."""
    v2 = draw(st.floats(0.5, 2.0))
    v1 = v2 * draw(st.floats(1.1, 3.0))
    return m.market(mu=draw(mu), k=draw(st.integers(1, 8)), v1=v1, lambda1=draw(st.floats(0.2, 3.0)),
                    dist1=draw(dist), v2=v2, lambda2=draw(st.floats(0.2, 3.0)), dist2=draw(dist))


texp_specs = st.floats(0.2, 5.0).map(lambda r: f"texp:{r!r}")
any_dist = st.one_of(st.just("uniform"), texp_specs)
