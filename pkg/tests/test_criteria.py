import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelrisk.criteria import (
    FunctionPayoff,
    Linear,
    american_put,
    compensated_gradient,
    constant,
    criterion_value,
    expression,
    forward_start,
    gradient,
    payoff_value,
    stopping_rule,
)
from modelrisk.models import Bachelier, BlackScholes, sample


def test_forward_start_gradient():
    g1, g2 = gradient(forward_start(), None, (np.array([1.0, 1.0]), np.array([1.5, 0.5])))
    assert np.allclose(g1, [-1.0, 0.0])
    assert np.allclose(g2, [1.0, 0.0])


def test_gradient_accepts_stacked_points():
    x = np.array([[1.0, 2.0], [2.0, 1.0]])
    g1, g2 = gradient(forward_start(), None, x)
    assert g1.shape == (2,)
    assert np.allclose(g2, [1.0, 0.0])


def test_constant_gradient_is_zero():
    g1, g2 = gradient(constant(3.0), None, (np.ones(4), np.ones(4)))
    assert not g1.any() and not g2.any()


def test_function_payoff():
    c = Linear(FunctionPayoff(lambda a, b: a * b, lambda a, b: (b, a)))
    g1, g2 = gradient(c, None, (np.array(2.0), np.array(3.0)))
    assert (float(g1), float(g2)) == (3.0, 2.0)


@pytest.fixture(scope="module")
def put():
    return american_put(), BlackScholes(sigma=0.5)


def test_put_has_single_exercise_boundary(put):
    c, m = put
    reg = c.region(m)
    assert reg.switches == 1
    # minimising: deep in the money it pays to wait, so the stop set lies above the cut
    assert list(reg.taus) == [2, 1]
    assert reg.cuts[0] == pytest.approx(0.4925, abs=5e-4)


def test_put_decision_changes_sign_at_boundary(put):
    c, m = put
    b = c.region(m).cuts[0]
    assert c.decision(m, b + 1e-6)[0] <= 0 < c.decision(m, b - 1e-6)[0]


def test_stopping_rule_scalar_and_array(put):
    c, m = put
    assert stopping_rule(c, m, 0.2) == 2
    assert stopping_rule(c, m, 1.0) == 1
    assert list(stopping_rule(c, m, np.array([0.2, 1.0]))) == [2, 1]


def test_stopping_rule_rejects_linear():
    with pytest.raises(TypeError):
        stopping_rule(forward_start(), Bachelier(sigma=1.0), 0.0)


def test_put_gradient_on_stop_region(put):
    c, m = put
    # stopped and in the money: x1 between the cut and the first discounted strike
    g1, g2 = gradient(c, m, (np.array([0.6, 0.9]), np.array([0.2, 0.2])))
    assert list(g1) == [-1.0, 0.0]
    assert list(g2) == [0.0, 0.0]


def test_put_gradient_on_continuation(put):
    c, m = put
    k2 = 0.8 * np.exp(-0.1)
    g1, g2 = gradient(c, m, (np.array([0.3, 0.3]), np.array([0.5, 0.9])))
    assert np.allclose(g1, 0.0)
    assert np.allclose(g2, [-1.0, 0.0])
    assert 0.5 < k2 < 0.9


def test_stopping_gradient_matches_frozen_payoff(put):
    c, m = put
    x = sample(m, 2000, 4)
    x1, x2 = x[:, 0], x[:, 1]
    g1, g2 = gradient(c, m, x)
    tau = stopping_rule(c, m, x1)
    f1 = Linear(c.l1)
    f2 = Linear(c.l2)
    a1, a2 = gradient(f1, None, (x1, x2))
    b1, b2 = gradient(f2, None, (x1, x2))
    b = c.region(m).cuts[0]
    away = np.abs(x1 - b) > 1e-9
    assert np.array_equal(np.where(tau == 1, a1, b1)[away], g1[away])
    assert np.array_equal(np.where(tau == 1, 0.0 * a2, b2)[away], g2[away])


def test_discount_conventions_differ():
    m = BlackScholes(sigma=0.5)
    a = american_put(discount_convention="t12").region(m).cuts[0]
    b = american_put(discount_convention="t01").region(m).cuts[0]
    assert b > a
    with pytest.raises(ValueError):
        american_put(discount_convention="t23")


def test_compensated_gradient_second_block_exact(put):
    c, m = put
    x = sample(m, 300, 9)
    _, g2 = gradient(c, m, x)
    c1, c2 = compensated_gradient(c, m, x)
    assert np.array_equal(c2, g2)
    assert np.all((c1 <= 1e-12) & (c1 >= -1 - 1e-12))


def test_compensated_gradient_forward_start_bachelier():
    m = Bachelier(sigma=1.0)
    c1, c2 = compensated_gradient(forward_start(), m, (np.array([0.0, 1.0]), np.array([1.0, 0.0])))
    assert np.allclose(c1, -0.5)
    assert np.allclose(c2, [1.0, 0.0])


def test_criterion_value_forward_start():
    m = Bachelier(sigma=1.0)
    x = sample(m, 200_000, 0)
    assert criterion_value(forward_start(), x) == pytest.approx(1 / np.sqrt(2 * np.pi), abs=0.005)


def test_criterion_value_weights_and_errors():
    x = np.array([[0.0, 1.0], [0.0, 3.0]])
    assert criterion_value(forward_start(), x, weights=[0.25, 0.75]) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        criterion_value(forward_start(), x, weights=[0.0, 0.0])
    with pytest.raises(ValueError):
        payoff_value(american_put(), None, x[:, 0], x[:, 1])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 50.0), st.sampled_from(["max(x2 - x1, 0)", "x1 * x2 - max(x1, 1)", "max(0.8 - x2, 0) + x1"]))
def test_gradient_is_positively_homogeneous(lam, text):
    x = sample(BlackScholes(sigma=0.3), 200, 2)
    c = expression(text)
    g1, g2 = gradient(c, None, x)
    h1, h2 = gradient(c.scaled(lam), None, x)
    assert np.allclose(h1, lam * g1, rtol=1e-12, atol=1e-12)
    assert np.allclose(h2, lam * g2, rtol=1e-12, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 20.0))
def test_scaled_put_keeps_its_stopping_rule(lam):
    m = BlackScholes(sigma=0.5)
    c = american_put()
    x = sample(m, 200, 1)
    g1, g2 = gradient(c, m, x)
    h1, h2 = gradient(c.scaled(lam), m, x)
    assert np.allclose(h1, lam * g1) and np.allclose(h2, lam * g2)
