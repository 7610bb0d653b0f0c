import os
import subprocess
import sys

import numpy as np
import pytest

from modelrisk import _kernels as K

BACKENDS = K.available_backends()
both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def _nw_inputs(seed=0, n=3000):
    rng = np.random.default_rng(seed)
    xd = np.sort(rng.standard_normal(n))
    wd = rng.uniform(0.5, 1.5, n)
    wd /= wd.sum()
    yd = np.column_stack([np.cos(xd), xd])
    xq = np.linspace(-3, 3, 101)
    return xq, xd, wd, yd


def test_backend_is_reported():
    assert K.BACKEND in ("cython", "python")
    assert "python" in BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
def test_nw_matches_dense_formula(backend):
    xq, xd, wd, yd = _nw_inputs()
    bw = 0.2
    out = K.nw_smooth(xq, xd, wd, yd, bw, backend=backend)
    kern = wd[None, :] * np.exp(-0.5 * ((xq[:, None] - xd[None, :]) / bw) ** 2)
    dense = kern @ yd / kern.sum(axis=1, keepdims=True)
    assert np.allclose(out, dense, atol=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_nw_one_dimensional_values(backend):
    xq, xd, wd, yd = _nw_inputs()
    out = K.nw_smooth(xq, xd, wd, yd[:, 0], 0.3, backend=backend)
    assert out.shape == xq.shape


@pytest.mark.parametrize("backend", BACKENDS)
def test_nw_empty_window_is_nan(backend):
    out = K.nw_smooth(np.array([100.0]), np.array([0.0, 1.0]), np.array([0.5, 0.5]),
                      np.array([1.0, 2.0]), 0.1, backend=backend)
    assert np.isnan(out).all()


@both
def test_backends_agree_on_smoother():
    xq, xd, wd, yd = _nw_inputs(seed=3)
    a = K.nw_smooth(xq, xd, wd, yd, 0.1, backend="cython")
    b = K.nw_smooth(xq, xd, wd, yd, 0.1, backend="python")
    assert np.allclose(a, b, atol=1e-12)


def _foc_inputs(seed=0, n=200, m=16):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n), rng.standard_normal((n, m)), np.full((n, m), 1.0 / m)


def _F(h, a, b, w, pp, alpha):
    g = lambda y: pp * np.sign(y) * np.abs(y) ** (pp - 1)
    return alpha * g(a - h) - np.sum(w * g(b + h[:, None]), axis=1)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("pp", [1.3, 2.0, 4.0])
@pytest.mark.parametrize("alpha", [1.0, 0.0])
def test_foc_roots(backend, pp, alpha):
    a, b, w = _foc_inputs()
    h, res, ok = K.solve_foc(a, b, w, pp, alpha, backend=backend)
    assert ok.all()
    assert np.allclose(res, np.abs(_F(h, a, b, w, pp, alpha)), atol=1e-12)
    # the map is decreasing: h is a root iff F changes sign across a tiny bracket
    d = 1e-11 * (1 + np.abs(h))
    assert np.all(_F(h - d, a, b, w, pp, alpha) >= 0)
    assert np.all(_F(h + d, a, b, w, pp, alpha) <= 0)
    if pp >= 2:
        assert np.max(res) <= 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_foc_quadratic_closed_form(backend):
    a, b, w = _foc_inputs(seed=1)
    h, _, _ = K.solve_foc(a, b, w, 2.0, 1.0, backend=backend)
    assert np.allclose(h, 0.5 * (a - b.mean(axis=1)), atol=1e-10)


@both
def test_backends_agree_on_roots():
    a, b, w = _foc_inputs(seed=2, n=500)
    h1, _, _ = K.solve_foc(a, b, w, 1.5, 1.0, backend="cython")
    h2, _, _ = K.solve_foc(a, b, w, 1.5, 1.0, backend="python")
    assert np.allclose(h1, h2, atol=1e-11)


def test_unknown_backend_rejected():
    a, b, w = _foc_inputs(n=2)
    with pytest.raises(ValueError):
        K.solve_foc(a, b, w, 2.0, backend="fortran")


def test_env_var_forces_fallback():
    env = dict(os.environ, MODELRISK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from modelrisk import _kernels as K; print(K.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_results_do_not_depend_on_backend():
    code = ("from modelrisk import *; m=BlackScholes(sigma=0.4); c=forward_start();"
            "print(repr(adapted_martingale_sensitivity(c, m, 3.0).value))")
    env = dict(os.environ, MODELRISK_PURE_PYTHON="1")
    slow = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    fast = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert float(slow.stdout) == pytest.approx(float(fast.stdout), rel=1e-9)
