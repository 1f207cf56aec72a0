import math

import numpy as np
import pytest

from thetamilstein.models import (HALF_LINE, AssumptionConstants, DomainError, SdeModel,
                                  UnknownModelError, audit_assumptions, builtin_model,
                                  builtin_names, default_grid, estimate_growth_constants,
                                  monotone_growth_lhs)

HESTON = [0.1, 0.2, math.sqrt(0.2)]

BUILTINS = [
    ("heston32", HESTON),
    ("linear", [-1.0, 1.0]),
    ("linear", [0.5, 2.0]),
    ("cubic", []),
    ("meanrev_power", [1.0, 1.0, math.sqrt(0.2), 1.0]),
    ("meanrev_power", [1.0, 1.0, math.sqrt(0.2), 0.5]),
    ("meanrev_power", [0.5, 2.0, 0.7, 0.8]),
    ("meanrev_general", [1.0, 2.0, 0.75]),
    ("zero", []),
]


def fd_l1g(model, x, h=1e-6):
    """g(x) times a centred difference of g."""
    hh = h * np.maximum(1.0, np.abs(x))
    return model.diffusion(x) * (model.diffusion(x + hh) - model.diffusion(x - hh)) / (2 * hh)


def test_heston_l1g_value():
    m = builtin_model("heston32", HESTON)
    assert m.l1g(1.0) == pytest.approx(0.3, rel=1e-14)
    assert fd_l1g(m, 1.0) == pytest.approx(0.3, rel=1e-8)


def test_linear_l1g():
    m = builtin_model("linear", [-0.7, 1.3])
    xs = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(m.l1g(xs), 1.3 ** 2 * xs, rtol=1e-15)


def test_cubic_l1g():
    m = builtin_model("cubic")
    assert m.l1g(2.0) == 16.0
    assert fd_l1g(m, 2.0) == pytest.approx(16.0, rel=1e-8)


@pytest.mark.parametrize("name,params", BUILTINS)
def test_l1g_matches_finite_difference(name, params):
    m = builtin_model(name, params)
    g = default_grid(m)
    lo, hi = g.min(), g.max()
    lo = 1e-3 if m.half_line else lo  # keep the centred stencil inside the domain
    x = np.linspace(lo, hi, 1000)
    l = m.l1g(x)
    assert np.all(np.abs(l - fd_l1g(m, x)) <= 1e-6 * (1 + np.abs(l)))


@pytest.mark.parametrize("name,params", BUILTINS)
def test_l1g_equals_g_times_gprime(name, params):
    m = builtin_model(name, params)
    x = default_grid(m)
    x = x[x != 0] if m.half_line else x
    l = m.l1g(x)
    prod = m.diffusion(x) * m.diffusion_derivative(x)
    assert np.all(np.abs(l - prod) <= 1e-12 * np.maximum(np.abs(l), 1e-300))


@pytest.mark.parametrize("name,params", BUILTINS)
def test_boundary_values(name, params):
    m = builtin_model(name, params)
    assert m.drift_at_zero == m.drift(0.0)
    assert m.diffusion_at_zero == m.diffusion(0.0)


@pytest.mark.parametrize("name,params", BUILTINS)
def test_shipped_constants_pass_audit(name, params):
    m = builtin_model(name, params)
    rep = audit_assumptions(m)
    assert rep.passed, rep.violations[:5]


@pytest.mark.parametrize("name,params", BUILTINS)
def test_builtin_is_deterministic(name, params):
    a = builtin_model(name, params)
    b = builtin_model(name, params)
    x = np.abs(default_grid(a)) if a.half_line else default_grid(a)
    for fn in ("drift", "diffusion", "l1g"):
        assert np.array_equal(getattr(a, fn)(x), getattr(b, fn)(x))
    assert a.constants == b.constants


def test_half_line_refuses_negative_arguments():
    m = builtin_model("heston32", HESTON)
    with pytest.raises(DomainError):
        m.diffusion(-0.1)
    with pytest.raises(DomainError):
        m.drift(np.array([1.0, -1e-300]))


def test_heston_analytic_K():
    m = builtin_model("heston32", HESTON)
    assert m.constants.one_sided_lipschitz_K == 0.1
    assert m.domain == HALF_LINE


def test_linear_stored_K_passes_and_tighter_K_too():
    m = builtin_model("linear", [-1.0, 1.0])
    assert m.constants.one_sided_lipschitz_K == 0.0
    assert audit_assumptions(m).passed
    import dataclasses

    tight = dataclasses.replace(m, constants=dataclasses.replace(m.constants, one_sided_lipschitz_K=-1.0))
    assert audit_assumptions(tight).passed
    too_tight = dataclasses.replace(m, constants=dataclasses.replace(m.constants, one_sided_lipschitz_K=-1.1))
    assert not audit_assumptions(too_tight).passed


def _square_drift_model(K):
    zero = lambda x: 0.0 * np.asarray(x, dtype=float)
    return SdeModel.build("square", lambda x: x * x, zero, zero, zero, "whole-line",
                          AssumptionConstants(K, 0.0, 0.0, 2.0, 1.0))


def test_superlinear_drift_fails_one_sided_lipschitz():
    grid = np.arange(-10.0, 10.5, 1.0)
    # brute-force oracle: largest Lipschitz quotient (x-y)(f(x)-f(y))/(x-y)^2 = x + y
    quot = max((x + y) for x in grid for y in grid if x != y)
    assert quot == 19.0
    for K in (1.0, 10.0, 18.9):
        rep = audit_assumptions(_square_drift_model(K), grid)
        kinds = {(v.x, v.y) for v in rep.violations if v.condition == "one-sided-lipschitz"}
        assert kinds
        assert (9.0, 10.0) in kinds
    # the symmetric pair itself satisfies the bound
    assert (-10.0, 10.0) not in {(v.x, v.y) for v in audit_assumptions(_square_drift_model(1.0), grid).violations}
    assert audit_assumptions(_square_drift_model(19.0), grid).passed


def test_heston_audit_on_uniform_grid():
    m = builtin_model("heston32", HESTON)
    rep = audit_assumptions(m, np.round(np.arange(0, 10.05, 0.1), 10))
    assert rep.passed
    assert rep.pairs_checked == 101 * 100 // 2


def test_pair_budget_limits_work():
    m = builtin_model("cubic")
    rep = audit_assumptions(m, np.linspace(-3, 3, 200), pair_budget=50)
    assert rep.pairs_checked == 50
    with pytest.raises(ValueError):
        audit_assumptions(m, pair_budget=0)


def test_monotone_type_audit_uses_estimated_constants():
    m = builtin_model("heston32", HESTON)
    params = (1.0, 1.0, 2.0 ** -8)
    a, b = estimate_growth_constants(m, *params)
    assert audit_assumptions(m, params=params, growth=(a, b)).passed
    # a bound that is too small is caught
    rep = audit_assumptions(m, params=params, growth=(0.0, 0.0))
    assert any(v.condition == "monotone-type" for v in rep.violations)


def test_growth_constants_bound_lhs():
    m = builtin_model("meanrev_general", [1.0, 2.0, 0.75])
    a, b = estimate_growth_constants(m, 1.0, 1.0, 0.01)
    x = np.linspace(0, 10, 3001)
    assert np.all(monotone_growth_lhs(m, 1.0, 1.0, 0.01, x) <= a + b * x * x + 1e-12)


def test_csv_rows():
    rep = audit_assumptions(_square_drift_model(1.0), np.array([0.0, 1.0, 2.0]))
    text = rep.to_csv()
    assert text.splitlines()[0] == "pair,condition,margin"
    assert "one-sided-lipschitz" in text


def test_errors():
    with pytest.raises(UnknownModelError):
        builtin_model("nope", [])
    with pytest.raises(ValueError):
        builtin_model("heston32", [0.1, -0.2, 0.3])
    with pytest.raises(ValueError):
        builtin_model("meanrev_power", [1, 1, 1, 0.4])
    with pytest.raises(ValueError):
        builtin_model("linear", [1.0])
    assert "heston32" in builtin_names()


def test_default_grid_shape():
    h = builtin_model("heston32", HESTON)
    g = default_grid(h)
    assert g[0] == 0 and g[1] == pytest.approx(1e-4) and g[-1] == pytest.approx(10.0)
    assert len(g) == 1 + 21
    w = default_grid(builtin_model("cubic"))
    np.testing.assert_array_equal(w, -w[::-1])
