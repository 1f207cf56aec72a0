import math

import numpy as np
import pytest

from thetamilstein.implicit import SchemeParams, closed_form_heston_step
from thetamilstein.models import builtin_model
from thetamilstein.rng import IncrementStream, block_increments
from thetamilstein.stability import growth_factor
from thetamilstein.stepper import (b_rhs, n_steps, simulate_batch, simulate_path, simulate_paths,
                                   step)

HESTON = builtin_model("heston32", [0.1, 0.2, math.sqrt(0.2)])


def test_b_rhs_trivial_heston():
    assert b_rhs(HESTON, SchemeParams(1, 1, 0.1), 0.5, 0.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("alpha,mu", [(-1.0, 1.0), (0.3, 2.0), (-4.0, 0.5)])
def test_b_rhs_linear_explicit(alpha, mu):
    m = builtin_model("linear", [alpha, mu])
    expected = 1 + 0.1 * alpha + 0.2 * mu + 0.5 * mu * mu * (0.04 - 0.1)
    assert b_rhs(m, SchemeParams(0, 0, 0.1), 1.0, 0.2) == pytest.approx(expected, rel=1e-14)


def test_heston_step_closed_form_value():
    x1 = step(HESTON, SchemeParams(1, 1, 0.1), 0.5, 0.0)
    assert x1 == pytest.approx(closed_form_heston_step(0.1, 0.2, math.sqrt(0.2), 0.1, 0.5), rel=1e-14)
    assert x1 == pytest.approx(0.4963410062553827, rel=1e-12)


def test_zero_is_absorbing_for_heston():
    assert step(HESTON, SchemeParams(1, 1, 0.1), 0.0, 0.37) == 0.0


@pytest.mark.parametrize("name,params", [("linear", [-1.0, 1.0]), ("cubic", []),
                                         ("heston32", [0.1, 0.2, math.sqrt(0.2)])])
def test_theta_sigma_zero_reduces_to_milstein(name, params):
    m = builtin_model(name, params)
    p = SchemeParams(0, 0, 0.01)
    dw = block_increments(3, np.arange(200), p.dt, 0, 100)
    x0 = 0.5
    a = simulate_batch(m, p, "theta_sigma", x0, dw, record=True)
    b = simulate_batch(m, p, "milstein", x0, dw, record=True)
    ok = ~a.failed & (b.negative_excursions == 0)
    assert ok.sum() > 150
    diff = np.abs(a.states[ok] - b.states[ok]) / np.maximum(1, np.abs(b.states[ok]))
    assert diff.max() <= 1e-12


def test_heston_implicit_never_negative():
    p = SchemeParams(1, 1, 0.05)
    res = simulate_paths(HESTON, p, "theta_sigma", 0.5, 5.0, 500, 11, record=True)
    assert res.negative_excursions.sum() == 0
    assert not res.failed.any()
    assert res.states.min() >= 0


def test_em_can_go_negative_on_half_line():
    m = builtin_model("meanrev_power", [1.0, 0.05, 1.5, 0.5])
    res = simulate_paths(m, SchemeParams(0, 0, 0.1), "em", 0.05, 5.0, 500, 2)
    assert res.negative_excursions.sum() > 0


def test_linear_second_moment_growth_factor():
    m = builtin_model("linear", [-1.0, 1.0])
    p = SchemeParams(0.5, 1, 1.0)
    n = 5
    res = simulate_paths(m, p, "theta_sigma", 1.0, float(n), 10 ** 5, 4, record=True, chunk=20000)
    g = float(growth_factor(0.5, 1, -1.0, 1.0))
    assert g < 1
    sq = res.states ** 2
    for k in range(1, n + 1):
        est = sq[:, k].mean()
        se = sq[:, k].std(ddof=1) / math.sqrt(sq.shape[0])
        assert abs(est - g ** k) < 4 * se, (k, est, g ** k, se)


def test_workers_and_chunks_do_not_change_results():
    p = SchemeParams(1, 1, 2 ** -6)
    a = simulate_paths(HESTON, p, "theta_sigma", 0.5, 1.0, 300, 9, chunk=300)
    b = simulate_paths(HESTON, p, "theta_sigma", 0.5, 1.0, 300, 9, chunk=37, workers=4)
    np.testing.assert_array_equal(a.terminal, b.terminal)


def test_single_path_matches_batch():
    p = SchemeParams(1, 1, 2 ** -5)
    batch = simulate_paths(HESTON, p, "theta_sigma", 0.5, 1.0, 5, 21, record=True)
    one = simulate_path(HESTON, p, "theta_sigma", 0.5, 1.0, IncrementStream(21, 3, 2 ** -5), record=True)
    assert one.terminal_state == batch.terminal[3]
    np.testing.assert_array_equal(one.states, batch.states[3])
    assert batch.path(3).terminal_state == one.terminal_state


def test_failure_freezes_path():
    # theta=1, sigma=0, beta^2 dt > 1: the increment dw = -1/beta^2 pushes b below F(0)
    m = builtin_model("meanrev_power", [1.0, 0.01, 3.0, 1.0])
    p = SchemeParams(1.0, 0.0, 0.5)
    res = simulate_batch(m, p, "theta_sigma", 1.0, np.array([[-1 / 9, 0.0, 0.0]]), record=True)
    assert res.failed[0] and res.failure_step[0] == 0
    assert np.all(res.states[0] == 1.0)
    assert res.path(0).failure_step == 0


def test_validation():
    with pytest.raises(ValueError):
        n_steps(1.0, 0.3)
    assert n_steps(1.0, 2 ** -8) == 256
    with pytest.raises(ValueError):
        simulate_batch(HESTON, SchemeParams(1, 1, 0.1), "rk4", 0.5, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        simulate_batch(HESTON, SchemeParams(1, 1, 0.1), "em", -0.5, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        simulate_batch(HESTON, SchemeParams(1, 1, 1.0), "theta_sigma", 0.5, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        simulate_path(HESTON, SchemeParams(1, 1, 0.1), "em", 0.5, 1.0, IncrementStream(0, 0, 0.05))
