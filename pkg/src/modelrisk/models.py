"""Two-period reference laws: Bachelier, Black-Scholes and empirical samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from ._kernels import nw_smooth
from .errors import NumericalError
from .quadrature import ConditionalRule, ZMAX, normal_rule


@dataclass(frozen=True)
class MarginalDensityTable:
    """First-marginal density and conditional moment weight on the working grid."""

    grid: np.ndarray
    q1: np.ndarray
    vp: np.ndarray
    pprime: float

    @property
    def v2(self):
        if self.pprime != 2.0:
            raise ValueError("table was built for a different exponent")
        return self.vp


@dataclass(frozen=True, kw_only=True)
class TwoPeriodModel:
    """Base class. Subclasses define the law of (X1, X2)."""

    trunc: tuple = (1e-3, 1e-3)
    grid_size: int = 512
    quad_order: int = 64

    kind = "abstract"
    dim = 1

    def __post_init__(self):
        lo, hi = (float(t) for t in self.trunc)
        if not (0.0 < lo < 0.5 and 0.0 < hi < 0.5):
            raise ValueError("truncation quantiles must lie in (0, 0.5)")
        if self.grid_size < 4:
            raise ValueError("grid_size must be at least 4")
        if self.quad_order < 2:
            raise ValueError("quad_order must be at least 2")

    # hooks
    def draw(self, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def interval(self):
        raise NotImplementedError

    def grid(self, size: int | None = None):
        lo, hi = self.interval()
        return np.linspace(lo, hi, size or self.grid_size)

    def q1(self, x):
        raise NotImplementedError

    def rule(self, x1, kinks=()):
        """Conditional rule at first-period points ``x1``."""
        raise NotImplementedError

    def with_sigma(self, sigma):
        raise TypeError(f"{self.kind} model has no volatility parameter")


@dataclass(frozen=True)
class _Gaussian(TwoPeriodModel):
    """Models driven by two independent normal scores."""

    sigma: float = 1.0
    spot: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError("sigma must be positive")

    def x1_from_z(self, z):
        raise NotImplementedError

    def z_from_x1(self, x1):
        raise NotImplementedError

    def x2_from_z(self, x1, z):
        raise NotImplementedError

    def draw(self, n, rng):
        z = rng.standard_normal((n, 2))
        x1 = self.x1_from_z(z[:, 0])
        return x1, self.x2_from_z(x1, z[:, 1])

    def interval(self):
        lo, hi = self.trunc
        return float(self.x1_from_z(norm.ppf(lo))), float(self.x1_from_z(norm.isf(hi)))

    def mass(self, a, b):
        return float(norm.cdf(self.z_from_x1(b)) - norm.cdf(self.z_from_x1(a)))

    def rule(self, x1, kinks=()):
        return normal_rule(x1, self.x2_from_z, kinks, self.quad_order)

    def with_sigma(self, sigma):
        from dataclasses import replace

        return replace(self, sigma=float(sigma))


@dataclass(frozen=True)
class Bachelier(_Gaussian):
    """X1 = spot + sigma Z1, X2 = X1 + sigma Z2."""

    spot: float = 0.0
    kind = "bachelier"

    def x1_from_z(self, z):
        return self.spot + self.sigma * np.asarray(z)

    def z_from_x1(self, x1):
        return (np.asarray(x1) - self.spot) / self.sigma

    def x2_from_z(self, x1, z):
        return x1 + self.sigma * z

    def q1(self, x):
        return norm.pdf(self.z_from_x1(x)) / self.sigma


@dataclass(frozen=True)
class BlackScholes(_Gaussian):
    """Driftless geometric Brownian motion sampled at two unit-spaced dates."""

    kind = "black_scholes"

    def __post_init__(self):
        super().__post_init__()
        if not self.spot > 0.0:
            raise ValueError("spot must be positive")

    def x1_from_z(self, z):
        s = self.sigma
        return self.spot * np.exp(-0.5 * s * s + s * np.asarray(z))

    def z_from_x1(self, x1):
        s = self.sigma
        with np.errstate(divide="ignore"):
            return (np.log(np.asarray(x1) / self.spot) + 0.5 * s * s) / s

    def x2_from_z(self, x1, z):
        s = self.sigma
        return x1 * np.exp(-0.5 * s * s + s * z)

    def q1(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = norm.pdf(self.z_from_x1(x[pos])) / (self.sigma * x[pos])
        return out


def _weighted_quantile(x, w, q):
    order = np.argsort(x, kind="stable")
    cw = np.cumsum(w[order])
    cw /= cw[-1]
    return float(x[order][min(np.searchsorted(cw, q), x.size - 1)])


@dataclass(frozen=True)
class Empirical(TwoPeriodModel):
    """Weighted sample of (x1, x2) pairs; rows of ``points`` are (x1..., x2...)."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    weights: np.ndarray | None = None
    bandwidth: float | None = None
    kind = "empirical"

    def __post_init__(self):
        super().__post_init__()
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 2 or pts.shape[1] % 2:
            raise ValueError("points must have at least two rows and an even number of columns")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        w = np.full(pts.shape[0], 1.0 / pts.shape[0]) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (pts.shape[0],) or np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-9):
            raise ValueError("weights must be nonnegative, one per point, and sum to 1")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w / w.sum())

    @property
    def dim(self):
        return self.points.shape[1] // 2

    @property
    def x1(self):
        d = self.dim
        return self.points[:, 0] if d == 1 else self.points[:, :d]

    @property
    def x2(self):
        d = self.dim
        return self.points[:, 1] if d == 1 else self.points[:, d:]

    def draw(self, n, rng):
        idx = rng.choice(self.points.shape[0], size=n, p=self.weights)
        return self.x1[idx], self.x2[idx]

    def interval(self, axis: int = 0):
        x = self.points[:, axis]
        lo, hi = self.trunc
        return _weighted_quantile(x, self.weights, lo), _weighted_quantile(x, self.weights, 1.0 - hi)

    def grid(self, size=None, axis: int = 0):
        lo, hi = self.interval(axis)
        return np.linspace(lo, hi, size or self.grid_size)

    def mass(self, a, b):
        x = self.points[:, 0]
        return float(self.weights[(x >= a) & (x <= b)].sum())

    def _need_bandwidth(self):
        if self.bandwidth is None:
            raise ValueError("empirical model needs an explicit bandwidth for smoothing")
        return float(self.bandwidth)

    def q1(self, x):
        if self.dim != 1:
            raise ValueError("density only available for d = 1")
        bw = self._need_bandwidth()
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for s in range(0, x.size, 512):
            u = (x[s:s + 512, None] - self.x1[None, :]) / bw
            out[s:s + 512] = (norm.pdf(u) * self.weights[None, :]).sum(axis=1) / bw
        return out

    def _sorted(self):
        order = np.argsort(self.x1, kind="stable")
        return order, self.x1[order]

    def smooth(self, xq, values):
        """Kernel regression of ``values`` (one per point) on X1 at ``xq``."""
        bw = self._need_bandwidth()
        if self.dim != 1:
            return _nw_dense(np.asarray(xq), self.x1, self.weights, values, bw)
        order, xs = self._sorted()
        vals = np.asarray(values, dtype=float)
        out = nw_smooth(np.asarray(xq, dtype=float), xs, self.weights[order], vals[order], bw)
        if np.any(~np.isfinite(out)):
            raise NumericalError("kernel smoother has empty windows; increase the bandwidth")
        return out

    def rule(self, x1, kinks=(), cutoff: float = 8.0):
        if self.dim != 1:
            raise ValueError("conditional rules are only built for d = 1")
        bw = self._need_bandwidth()
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        order, xs = self._sorted()
        lo = np.searchsorted(xs, x1 - cutoff * bw, side="left")
        hi = np.searchsorted(xs, x1 + cutoff * bw, side="right")
        m = int(max(1, (hi - lo).max()))
        idx = lo[:, None] + np.arange(m)[None, :]
        valid = idx < hi[:, None]
        idx = np.minimum(idx, xs.size - 1)
        src = order[idx]
        u = (self.x1[src] - x1[:, None]) / bw
        w = np.where(valid, self.weights[src] * np.exp(-0.5 * u * u), 0.0)
        tot = w.sum(axis=1, keepdims=True)
        if np.any(tot <= 0):
            raise NumericalError("kernel smoother has empty windows; increase the bandwidth")
        return ConditionalRule(x1, self.x1[src], self.x2[src], w / tot)


def _nw_dense(xq, xd, wd, yd, bw):
    xq = np.atleast_2d(xq) if xq.ndim > 1 else xq[:, None]
    xd = xd if xd.ndim > 1 else xd[:, None]
    yd = np.asarray(yd, dtype=float)
    out = np.empty((xq.shape[0],) + yd.shape[1:])
    for s in range(0, xq.shape[0], 256):
        d2 = ((xq[s:s + 256, None, :] - xd[None, :, :]) ** 2).sum(axis=2) / (bw * bw)
        k = wd[None, :] * np.exp(-0.5 * d2)
        out[s:s + 256] = np.tensordot(k, yd, axes=(1, 0)) / k.sum(axis=1).reshape((-1,) + (1,) * (yd.ndim - 1))
    if np.any(~np.isfinite(out)):
        raise NumericalError("kernel smoother has empty windows; increase the bandwidth")
    return out


def sample(model: TwoPeriodModel, n: int, seed: int):
    """``n`` i.i.d. draws of (x1, x2) as an (n, 2d) array; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x1, x2 = model.draw(int(n), np.random.default_rng(seed))
    return np.column_stack([x1, x2])


def conditional_expectation(model: TwoPeriodModel, x1, integrand: Callable, kinks: Sequence[Callable] = ()):
    """E[integrand(X1, X2) | X1 = x1] for scalar or array ``x1``."""
    scalar = np.ndim(x1) == 0
    rule = model.rule(np.atleast_1d(np.asarray(x1, dtype=float)), kinks)
    vals = np.asarray(integrand(rule.x1, rule.x2), dtype=float)
    vals = np.broadcast_to(vals, rule.shape)
    live = rule.w > 0
    if not np.all(np.isfinite(vals[live])):
        raise NumericalError("integrand is not finite on quadrature nodes")
    out = np.sum(np.where(live, rule.w * vals, 0.0), axis=-1)
    return float(out[0]) if scalar else out


def marginal_density(model: TwoPeriodModel, pprime: float = 2.0, grid=None) -> MarginalDensityTable:
    """q1 and v_p'(x) = q1(x) E[|X2 - X1|^p' | X1 = x] on the working grid."""
    if model.dim != 1:
        raise ValueError("marginal density tables are only built for d = 1")
    g = model.grid() if grid is None else np.asarray(grid, dtype=float)
    q = np.asarray(model.q1(g), dtype=float)
    kink = (lambda a, b: b - a,) if pprime < 2 else ()
    m = conditional_expectation(model, g, lambda a, b: np.abs(b - a) ** pprime, kink)
    vp = q * m
    if np.any(~np.isfinite(q)) or np.any(q <= 0) or np.any(vp <= 0):
        raise NumericalError("density vanishes on the working interval")
    return MarginalDensityTable(g, q, vp, float(pprime))


def trapezoid_weights(x):
    """Weights of the composite trapezoid rule on nodes ``x``."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


__all__ = [
    "Bachelier",
    "BlackScholes",
    "ConditionalRule",
    "Empirical",
    "MarginalDensityTable",
    "TwoPeriodModel",
    "ZMAX",
    "conditional_expectation",
    "marginal_density",
    "sample",
    "trapezoid_weights",
]
