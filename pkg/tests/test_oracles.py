"""Closed-form and frozen reference values, checked before anything else."""

import numpy as np
import pytest
from scipy.stats import norm

from modelrisk import api
from modelrisk.criteria import constant, expression
from modelrisk.models import Bachelier, BlackScholes
from modelrisk.problem import Problem
from modelrisk.quadrature import gauss_hermite

# Bachelier forward-start: A = {Z2 > 0}, P(A) = 1/2 for every sigma
BACHELIER = {
    ("standard", "none"): 1.0,
    ("adapted", "none"): np.sqrt(3.0) / 2.0,
    ("adapted", "M"): 0.5,
    ("adapted", "m1"): np.sqrt(0.5),
    ("adapted", "M_m1"): 0.5,
}

# frozen from a 512-node run; standard-M has no closed form
FROZEN_STANDARD_M_BACHELIER = 0.668575451237

# American put K=0.8, rate 0.05, BS(0.5), spot 1, frozen reference values
FROZEN_PUT = {
    ("adapted", "none"): 0.610630446137,
    ("adapted", "M"): 0.436832705334,
    ("adapted", "m1"): 0.33572998333,
    ("adapted", "M_m1"): 0.0936807512229,
    ("standard", "none"): 0.610630446137,
    ("standard", "M"): 0.56905332375,
}


def bs_forward_start(sigma):
    P = norm.sf(sigma / 2.0)
    return {
        ("standard", "none"): np.sqrt(2 * P),
        ("adapted", "none"): np.sqrt(P * P + P),
        ("adapted", "M"): np.sqrt(P * (1 - P)),
        ("adapted", "m1"): np.sqrt(P),
        ("adapted", "M_m1"): np.sqrt(P * (1 - P)),
    }


def test_gauss_hermite_normal_moments():
    z, w = gauss_hermite(64)
    assert np.isclose(w.sum(), 1.0, atol=1e-14)
    for k, m in [(1, 0.0), (2, 1.0), (3, 0.0), (4, 3.0), (6, 15.0), (8, 105.0)]:
        assert np.isclose(np.sum(w * z ** k), m, atol=1e-10)


@pytest.mark.parametrize("sigma", [0.2, 1.0, 3.0])
def test_bachelier_forward_start_closed_forms(sigma):
    m = Bachelier(sigma=sigma)
    c = expression("max(x2 - x1, 0)")
    reps = api.sensitivities(c, m, 2.0, None, problem=Problem(c, m))
    for key, want in BACHELIER.items():
        assert reps[key].value == pytest.approx(want, abs=1e-10), key


def test_bachelier_standard_martingale_frozen(bach):
    c, m, pb = bach
    rep = api.sensitivity(c, m, 2.0, "M", "standard", problem=pb)
    assert rep.value == pytest.approx(FROZEN_STANDARD_M_BACHELIER, rel=1e-8)


@pytest.mark.parametrize("sigma", [0.2, 0.4, 0.8])
def test_black_scholes_forward_start_closed_forms(sigma):
    m = BlackScholes(sigma=sigma)
    c = expression("max(x2 - x1, 0)")
    reps = api.sensitivities(c, m, 2.0, None, problem=Problem(c, m))
    for key, want in bs_forward_start(sigma).items():
        assert reps[key].value == pytest.approx(want, abs=1e-8), key


def test_black_scholes_worked_numbers():
    v = bs_forward_start(0.4)
    assert v[("adapted", "none")] == pytest.approx(0.77315, abs=1e-5)
    assert v[("adapted", "M")] == pytest.approx(0.49368, abs=1e-5)
    assert v[("adapted", "m1")] == pytest.approx(0.64864, abs=1e-5)


def test_american_put_frozen(put05):
    c, m, pb = put05
    reps = api.sensitivities(c, m, 2.0, None, problem=pb)
    for key, want in FROZEN_PUT.items():
        assert reps[key].value == pytest.approx(want, rel=1e-8), key


def test_constant_payoff_is_insensitive():
    m = BlackScholes(sigma=0.3)
    c = constant(1.0)
    reps = api.sensitivities(c, m, 2.0, None, problem=Problem(c, m))
    for rep in reps.values():
        assert rep.value == pytest.approx(0.0, abs=1e-14)
        for h in rep.hedges.values():
            assert np.allclose(h.values, 0.0)


def test_bachelier_martingale_hedge_is_flat(bach):
    c, m, pb = bach
    rep = api.sensitivity(c, m, 2.0, "M", "adapted", problem=pb)
    assert np.allclose(rep.hedge("h").values, -0.5, atol=1e-12)
    rep = api.sensitivity(c, m, 2.0, "m1", "adapted", problem=pb)
    assert np.allclose(rep.hedge("f").values, 0.5, atol=1e-12)
    rep = api.sensitivity(c, m, 2.0, "M_m1", "adapted", problem=pb)
    assert np.allclose(rep.hedge("h").values, -0.5, atol=1e-12)
    assert np.allclose(rep.hedge("f").values, 0.0, atol=1e-12)
