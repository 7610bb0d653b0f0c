import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import norm

from modelrisk.errors import NumericalError
from modelrisk.models import (
    Bachelier,
    BlackScholes,
    Empirical,
    conditional_expectation,
    marginal_density,
    sample,
    trapezoid_weights,
)


@pytest.mark.parametrize("model", [Bachelier(sigma=0.3), Bachelier(sigma=2.0, spot=1.0),
                                   BlackScholes(sigma=0.2), BlackScholes(sigma=0.9)])
def test_density_integrates_to_interval_mass(model):
    g = model.grid(4097)
    mass = trapezoid(model.q1(g), g)
    lo, hi = model.trunc
    assert mass == pytest.approx(1.0 - lo - hi, abs=1e-4)


@pytest.mark.parametrize("model", [Bachelier(sigma=0.7), BlackScholes(sigma=0.5)])
def test_martingale_at_every_node(model):
    g = model.grid()
    e = conditional_expectation(model, g, lambda a, b: b)
    assert np.max(np.abs(e - g)) < 1e-8


def test_bachelier_conditional_variance():
    m = Bachelier(sigma=0.4)
    g = m.grid(33)
    v = conditional_expectation(m, g, lambda a, b: (b - a) ** 2)
    assert np.allclose(v, 0.16, atol=1e-12)


def test_black_scholes_conditional_second_moment():
    s = 0.6
    m = BlackScholes(sigma=s)
    g = m.grid(17)
    v = conditional_expectation(m, g, lambda a, b: b * b)
    assert np.allclose(v, g * g * np.exp(s * s), rtol=1e-10)


def test_kinked_integrand_matches_normal_cdf():
    m = Bachelier(sigma=1.0)
    k = lambda a, b: b - a - 0.3
    v = conditional_expectation(m, np.array([0.0, 1.0]), lambda a, b: (b - a > 0.3).astype(float), [k])
    assert np.allclose(v, norm.sf(0.3), atol=1e-12)


def test_scalar_input_gives_scalar():
    m = Bachelier(sigma=1.0)
    assert isinstance(conditional_expectation(m, 0.5, lambda a, b: b), float)


def test_non_finite_integrand_raises():
    m = Bachelier(sigma=1.0)
    with pytest.raises(NumericalError):
        conditional_expectation(m, np.zeros(3), lambda a, b: np.full_like(b, np.nan))


def test_quadrature_agrees_with_nested_monte_carlo():
    rng = np.random.default_rng(7)
    m = BlackScholes(sigma=0.4)
    x1 = 1.1
    n = 100_000
    z = rng.standard_normal(n)
    x2 = m.x2_from_z(np.full(n, x1), z)
    for _ in range(5):
        c = rng.normal(size=5)
        f = lambda a, b, c=c: sum(c[k] * b ** k for k in range(5))
        exact = conditional_expectation(m, x1, f)
        vals = f(x1, x2)
        se = vals.std(ddof=1) / np.sqrt(n)
        assert abs(vals.mean() - exact) < 3 * se + 1e-12


def test_sample_is_deterministic():
    m = BlackScholes(sigma=0.3)
    a = sample(m, 100, 5)
    b = sample(m, 100, 5)
    assert a.shape == (100, 2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample(m, 100, 6))


def test_sample_moments():
    m = Bachelier(sigma=0.5, spot=2.0)
    x = sample(m, 200_000, 1)
    assert x[:, 0].mean() == pytest.approx(2.0, abs=0.01)
    assert np.std(x[:, 1] - x[:, 0]) == pytest.approx(0.5, abs=0.01)
    assert np.mean(x[:, 1] - x[:, 0]) == pytest.approx(0.0, abs=0.01)


def test_marginal_density_table():
    m = Bachelier(sigma=0.5)
    t = marginal_density(m)
    assert np.allclose(t.vp, t.q1 * 0.25, rtol=1e-10)
    assert np.allclose(t.v2, t.vp)


def test_bad_parameters():
    with pytest.raises(ValueError):
        Bachelier(sigma=-1.0)
    with pytest.raises(ValueError):
        BlackScholes(sigma=0.2, spot=-1.0)
    with pytest.raises(ValueError):
        BlackScholes(sigma=0.2, trunc=(0.6, 0.1))


def test_trapezoid_weights():
    x = np.linspace(0, 2, 11)
    assert trapezoid_weights(x) @ x ** 2 == pytest.approx(trapezoid(x ** 2, x))


def _empirical(n=4000, seed=0, bw=0.15):
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(n)
    x2 = x1 + 0.5 * rng.standard_normal(n)
    return Empirical(points=np.column_stack([x1, x2]), bandwidth=bw)


def test_empirical_smoother_recovers_martingale_mean():
    m = _empirical()
    g = np.linspace(-1.0, 1.0, 9)
    e = conditional_expectation(m, g, lambda a, b: b - a)
    assert np.max(np.abs(e)) < 0.08


def test_empirical_needs_bandwidth():
    m = Empirical(points=np.zeros((3, 2)) + np.arange(3)[:, None])
    with pytest.raises(ValueError):
        m.rule(np.zeros(2))


def test_empirical_weights_validated():
    with pytest.raises(ValueError):
        Empirical(points=np.ones((3, 2)), weights=np.array([0.5, 0.5, 0.5]), bandwidth=0.1)
    with pytest.raises(ValueError):
        Empirical(points=np.ones((3, 3)), bandwidth=0.1)


def test_empirical_draw_resamples_rows():
    m = _empirical(n=50)
    x = sample(m, 500, 3)
    rows = {tuple(r) for r in m.points}
    assert all(tuple(r) in rows for r in x)
