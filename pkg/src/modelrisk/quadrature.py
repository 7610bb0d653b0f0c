"""Gaussian quadrature helpers and kink-aware conditional rules in normal-score space."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.stats import norm

ZMAX = 10.0
SCAN_POINTS = 257
BISECT_STEPS = 60


@lru_cache(maxsize=None)
def gauss_hermite(order: int):
    """Nodes and weights integrating against the standard normal density."""
    z, w = hermegauss(order)
    return z, w / w.sum()


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    return leggauss(order)


@dataclass(frozen=True)
class ConditionalRule:
    """Per-row discrete conditional laws: E[f | X1 = nodes[i]] ~ sum_j w[i,j] f(x1[i,j], x2[i,j])."""

    nodes: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    w: np.ndarray

    def expect(self, values):
        return np.sum(self.w * values, axis=-1)

    @property
    def shape(self):
        return self.w.shape


def _kink_roots(x1, to_x2, kink, zs):
    """Roots in z of kink(x1, to_x2(x1, z)) per row, as a padded (M, R) array (NaN = none)."""
    x1c = x1[:, None]
    vals = np.asarray(kink(x1c, to_x2(x1c, zs[None, :])), dtype=float)
    vals = np.broadcast_to(vals, (x1.size, zs.size))
    sg = np.where(vals >= 0.0, 1, -1)
    change = sg[:, :-1] != sg[:, 1:]
    rows, cols = np.nonzero(change)
    if rows.size == 0:
        return np.full((x1.size, 0), np.nan)
    lo = zs[cols].copy()
    hi = zs[cols + 1].copy()
    slo = sg[rows, cols]
    xr = x1[rows]
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        v = np.asarray(kink(xr, to_x2(xr, mid)), dtype=float)
        same = np.where(v >= 0.0, 1, -1) == slo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    root = 0.5 * (lo + hi)
    counts = np.bincount(rows, minlength=x1.size)
    R = counts.max()
    out = np.full((x1.size, R), np.nan)
    start = np.concatenate(([0], np.cumsum(counts)[:-1]))
    slot = np.arange(rows.size) - start[rows]
    out[rows, slot] = root
    return out


def normal_rule(x1, to_x2, kinks=(), order=64):
    """Conditional rule for X2 = to_x2(X1, Z), Z standard normal.

    Without kinks this is Gauss-Hermite of the given order. With kinks the
    normal-score axis [-ZMAX, ZMAX] is cut at every kink crossing and each
    piece gets its own Gauss-Legendre rule, so integrands with kinks or jumps
    along those sets are still integrated to full accuracy.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if not kinks:
        z, w = gauss_hermite(order)
        x2 = to_x2(x1[:, None], z[None, :])
        W = np.broadcast_to(w, x2.shape).copy()
        return ConditionalRule(x1, np.broadcast_to(x1[:, None], x2.shape).copy(), x2, W)
    zs = np.linspace(-ZMAX, ZMAX, SCAN_POINTS)
    parts = [_kink_roots(x1, to_x2, k, zs) for k in kinks]
    roots = np.concatenate(parts, axis=1) if parts else np.empty((x1.size, 0))
    roots = np.where(np.isnan(roots), ZMAX, roots)
    roots.sort(axis=1)
    M, R = roots.shape
    brk = np.concatenate([np.full((M, 1), -ZMAX), roots, np.full((M, 1), ZMAX)], axis=1)
    a, b = brk[:, :-1], brk[:, 1:]
    t, tw = gauss_legendre(order)
    half = 0.5 * (b - a)
    z = (0.5 * (a + b))[:, :, None] + half[:, :, None] * t[None, None, :]
    w = half[:, :, None] * tw[None, None, :] * norm.pdf(z)
    z = z.reshape(M, -1)
    w = w.reshape(M, -1)
    w = w / w.sum(axis=1, keepdims=True)
    x2 = to_x2(x1[:, None], z)
    return ConditionalRule(x1, np.broadcast_to(x1[:, None], x2.shape).copy(), x2, w)
