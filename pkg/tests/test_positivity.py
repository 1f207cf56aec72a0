import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thetamilstein.implicit import SchemeParams
from thetamilstein.models import builtin_model
from thetamilstein.positivity import (NONE, POSITIVE, HypothesisError, certify, default_probe_grid,
                                      margin, margin_curve_rows, max_dt_for_positivity)

HESTON = builtin_model("heston32", [0.1, 0.2, math.sqrt(0.2)])
BETA = math.sqrt(0.2)
MR1 = builtin_model("meanrev_power", [1.0, 1.0, BETA, 1.0])
MRH = builtin_model("meanrev_power", [1.0, 1.0, BETA, 0.5])


def bisect_max_dt(model, theta, sigma, grid, hi=1e6, iters=200):
    """Oracle: largest dt with non-negative margin on ``grid`` by bisection."""
    ok = lambda dt: np.all(margin(model, SchemeParams(theta, sigma, dt), grid) >= 0)
    if ok(hi):
        return math.inf
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


@pytest.mark.parametrize("dt", [1e-3, 1.0, 1e3])
def test_heston_margin_is_two_thirds_x(dt):
    grid = default_probe_grid(HESTON)
    np.testing.assert_allclose(margin(HESTON, SchemeParams(1, 1, dt), grid), 2 * grid / 3, rtol=1e-12)
    cert = certify(HESTON, SchemeParams(1, 1, dt))
    assert cert.holds and cert.nonnegative
    assert cert.kind == POSITIVE
    assert math.isinf(cert.dt_bound)


def test_meanrev_p1_bound():
    assert max_dt_for_positivity(MR1, 1, 0) == pytest.approx(1 / BETA ** 2, abs=1e-5)
    grid = default_probe_grid(MR1)
    assert max_dt_for_positivity(MR1, 1, 0, grid) == pytest.approx(bisect_max_dt(MR1, 1, 0, grid, 1e3), rel=1e-9)


def test_meanrev_p1_fails_beyond_bound():
    cert = certify(MR1, SchemeParams(1, 0, 2 / BETA ** 2))
    assert cert.kind == NONE and not cert.holds
    assert cert.violations.size > 0
    assert certify(MR1, SchemeParams(1, 0, 0.9 / BETA ** 2)).holds


def test_meanrev_half_unrestricted():
    assert math.isinf(max_dt_for_positivity(MRH, 1, 0))
    assert certify(MRH, SchemeParams(1, 0, 1e3)).holds


def test_margin_example_values():
    # meanrev p=1: m(x) = x/2 + dt (alpha mu - beta^2 x / 2) at theta=1, sigma=0
    x = np.array([0.5, 2.0, 7.0])
    np.testing.assert_allclose(margin(MR1, SchemeParams(1, 0, 0.5), x), x / 2 + 0.5 * (1 - 0.1 * x), rtol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 50), st.floats(1e-3, 2))
def test_margin_affine_in_sigma(theta, s1, s2, x, dt):
    # equal to the value at sigma=0 plus sigma * dt * L1g / 2
    a = margin(MR1, SchemeParams(theta, s1, dt), x)
    b = margin(MR1, SchemeParams(theta, s2, dt), x)
    l = float(MR1.l1g(x))
    assert a - b == pytest.approx(0.5 * (s1 - s2) * l * dt, abs=1e-10 * (1 + abs(a) + abs(b)))


def test_hypothesis_failures_are_named():
    with pytest.raises(HypothesisError, match="g\\(0\\) = 0"):
        certify(builtin_model("linear", [1.0, 1.0]).__class__.build(
            "shifted", lambda x: 0 * x, lambda x: 1 + x, lambda x: 1 + 0 * x, lambda x: 1 + x,
            "whole-line", HESTON.constants), SchemeParams(1, 1, 0.1))
    with pytest.raises(HypothesisError, match="f\\(0\\) >= 0"):
        certify(builtin_model("meanrev_general", [1, 2, 0.75]).__class__.build(
            "neg", lambda x: -1 + 0 * x, lambda x: x, lambda x: 1 + 0 * x, lambda x: x,
            "non-negative-half-line", HESTON.constants), SchemeParams(1, 1, 0.1))


def test_grid_validation_and_rows():
    with pytest.raises(ValueError):
        certify(HESTON, SchemeParams(1, 1, 0.1), np.array([0.0, 1.0]))
    cert = certify(HESTON, SchemeParams(1, 1, 0.1), np.array([0.5, 1.0]))
    rows = margin_curve_rows(cert)
    assert rows[0] == ("x", "margin") and len(rows) == 3
    lines = dict(l.split("=", 1) for l in cert.as_lines())
    assert lines["kind"] == "positive" and lines["dt_bound"] == "inf"
