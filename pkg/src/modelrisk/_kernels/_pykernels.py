"""NumPy versions of the compiled kernels, used when the extension is unavailable."""

from __future__ import annotations

import numpy as np


def nw_smooth(xq, xd, wd, yd, bandwidth, cutoff=8.0):
    """Gaussian Nadaraya-Watson smoother. ``xd`` must be sorted ascending."""
    xq = np.ascontiguousarray(xq, dtype=float)
    xd = np.ascontiguousarray(xd, dtype=float)
    wd = np.ascontiguousarray(wd, dtype=float)
    yd = np.ascontiguousarray(yd, dtype=float)
    half = cutoff * bandwidth
    out = np.full((xq.shape[0], yd.shape[1]), np.nan)
    order = np.argsort(xq, kind="stable")
    block = 256
    for s in range(0, order.size, block):
        idx = order[s:s + block]
        q = xq[idx]
        lo = np.searchsorted(xd, q.min() - half, side="left")
        hi = np.searchsorted(xd, q.max() + half, side="right")
        if hi <= lo:
            continue
        u = (xd[lo:hi][None, :] - q[:, None]) / bandwidth
        kw = wd[lo:hi][None, :] * np.exp(-0.5 * u * u)
        kw[np.abs(u) > cutoff] = 0.0
        den = kw.sum(axis=1)
        num = kw @ yd[lo:hi]
        with np.errstate(invalid="ignore", divide="ignore"):
            val = num / den[:, None]
        val[den <= 0.0] = np.nan
        out[idx] = val
    return out


def _grad(y, pp):
    return pp * np.sign(y) * np.abs(y) ** (pp - 1.0)


def _foc(h, a, b, w, pp, alpha):
    return alpha * _grad(a - h, pp) - np.sum(w * _grad(b + h[:, None], pp), axis=1)


def solve_foc(a, b, w, pprime, alpha, h0, xtol=1e-13, maxiter=200):
    """Root of the decreasing map h -> alpha*grad(a-h) - sum_j w_j grad(b_j+h), row by row."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    mid = np.array(h0, dtype=float)
    fm = _foc(mid, a, b, w, pprime, alpha)
    done = fm == 0.0
    ok = np.ones(a.shape[0], dtype=bool)
    step = 1e-2 * (1.0 + np.abs(mid))
    lo, hi = mid.copy(), mid.copy()
    flo, fhi = fm.copy(), fm.copy()
    it = np.zeros(a.shape[0], dtype=int)
    while True:
        act = ~done & (flo < 0.0) & (it < maxiter)
        if not act.any():
            break
        hi[act] = lo[act]
        lo[act] -= step[act]
        step[act] *= 2.0
        flo[act] = _foc(lo[act], a[act], b[act], w[act], pprime, alpha)
        it[act] += 1
    while True:
        act = ~done & (fhi > 0.0) & (it < maxiter)
        if not act.any():
            break
        lo[act] = hi[act]
        hi[act] += step[act]
        step[act] *= 2.0
        fhi[act] = _foc(hi[act], a[act], b[act], w[act], pprime, alpha)
        it[act] += 1
    bad = ~done & ((flo < 0.0) | (fhi > 0.0))
    ok[bad] = False
    done |= bad
    it[:] = 0
    while True:
        act = ~done
        if not act.any():
            break
        m = 0.5 * (lo[act] + hi[act])
        f = _foc(m, a[act], b[act], w[act], pprime, alpha)
        mid[act] = m
        fm[act] = f
        width = np.where(f > 0.0, hi[act] - m, m - lo[act])
        stop = (f == 0.0) | (m <= lo[act]) | (m >= hi[act]) | (width <= xtol * (1.0 + np.abs(m)))
        sub_lo = act.copy()
        sub_lo[act] = (f > 0.0) & ~stop
        sub_hi = act.copy()
        sub_hi[act] = (f <= 0.0) & ~stop
        lo[sub_lo] = mid[sub_lo]
        hi[sub_hi] = mid[sub_hi]
        it[act] += 1
        fin = act.copy()
        fin[act] = stop
        lim = act & ~fin & (it >= maxiter)
        ok[lim] = False
        done |= fin | lim
    return mid, np.abs(fm), ok
