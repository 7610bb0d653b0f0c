"""Shared evaluation state for one (criterion, model) pair.

A ``Problem`` owns the outer sample used for expectations over the reference
law, the gradient field on that sample, conditional expectations at the
sample points, and the conditional rule on the working grid where hedges live.
Everything is computed lazily and cached; the object is read-only afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.stats import norm

from .criteria import Criterion, gradient
from .errors import NumericalError
from .models import Empirical, TwoPeriodModel, trapezoid_weights
from .quadrature import ZMAX, gauss_legendre

MODES = ("quadrature", "mc", "data")
TAIL_ORDER = 32
TABLE_SIZE = 4097
TABLE_ZMAX = 9.0


@dataclass(frozen=True)
class Sample:
    """Weighted outer sample. In quadrature mode rows of length ``inner`` share one x1."""

    x1: np.ndarray
    x2: np.ndarray
    w: np.ndarray
    mode: str
    inner: int = 0

    @property
    def n(self):
        return self.w.size

    def mean(self, y):
        return float(np.sum(self.w * y))

    def stderr(self, y):
        if self.mode == "quadrature":
            return 0.0
        y = np.asarray(y, dtype=float)
        m = np.sum(self.w * y)
        return float(np.sqrt(np.sum(self.w ** 2 * (y - m) ** 2)))

    def rows(self, y):
        """View per-outer-node (quadrature mode only)."""
        return np.asarray(y).reshape(-1, self.inner)


def _bnorm(v, pprime):
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        return np.sqrt(np.sum(v * v, axis=1)) ** pprime
    return np.abs(v) ** pprime


def block_norm(sample: Sample, phi1, phi2, pprime: float):
    """Block-separable L^p' norm E[|phi1|^p' + |phi2|^p']^(1/p') with a delta-method s.e."""
    y = _bnorm(phi1, pprime) + _bnorm(phi2, pprime)
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite values in norm evaluation")
    m = sample.mean(y)
    val = max(m, 0.0) ** (1.0 / pprime)
    se = sample.stderr(y)
    dse = se * val ** (1.0 - pprime) / pprime if val > 0 else se ** (1.0 / pprime)
    return val, dse


def grad_np(y, pprime):
    """Gradient of |y|^p' (zero at the origin)."""
    y = np.asarray(y, dtype=float)
    return pprime * np.sign(y) * np.abs(y) ** (pprime - 1.0)


class Problem:
    """Cached sample, gradients and conditional expectations."""

    def __init__(self, criterion: Criterion, model: TwoPeriodModel, mode: str | None = None,
                 n: int = 200_000, seed: int = 0, grid=None, outer_order: int = 2):
        if mode is None:
            mode = "data" if isinstance(model, Empirical) else "quadrature"
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "quadrature" and not hasattr(model, "x1_from_z"):
            raise ValueError("quadrature mode needs an analytic model")
        if mode == "data" and not isinstance(model, Empirical):
            raise ValueError("data mode needs an empirical model")
        if mode == "mc" and n < 1:
            raise ValueError("n must be positive")
        self.criterion = criterion
        self.model = model
        self.mode = mode
        self.n = int(n)
        self.seed = seed
        self.outer_order = int(outer_order)
        if grid is None:
            self.grid = model.grid() if model.dim == 1 else None
        elif np.ndim(grid) == 0:
            self.grid = model.grid(int(grid))
        else:
            self.grid = np.asarray(grid, dtype=float)

    @property
    def dim(self):
        return self.model.dim

    @property
    def kinks(self):
        return self.criterion.kinks

    def gradient(self, x1, x2):
        return gradient(self.criterion, self.model, (x1, x2))

    # grid side --------------------------------------------------------------
    @cached_property
    def grid_rule(self):
        self._need_1d()
        return self.model.rule(self.grid, self.kinks)

    @cached_property
    def grid_g(self):
        r = self.grid_rule
        return self.gradient(r.x1, r.x2)

    @cached_property
    def grid_e1g(self):
        """(E1 g1, E1 g2) at the grid nodes."""
        r = self.grid_rule
        g1, g2 = self.grid_g
        return r.expect(g1), r.expect(g2)

    @cached_property
    def grid_q1(self):
        self._need_1d()
        q = np.asarray(self.model.q1(self.grid), dtype=float)
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise NumericalError("density vanishes on the working interval")
        return q

    @cached_property
    def grid_weights(self):
        """Probability weights on the grid: trapezoid times q1, normalised."""
        w = trapezoid_weights(self.grid) * self.grid_q1
        return w / w.sum()

    def grid_e1(self, fn):
        r = self.grid_rule
        return r.expect(np.broadcast_to(fn(r.x1, r.x2), r.shape))

    def grid_l2(self, values):
        """L2(mu1) norm of nodal values."""
        return float(np.sqrt(np.sum(self.grid_weights * np.asarray(values) ** 2)))

    # sample side --------------------------------------------------------------
    @cached_property
    def _outer(self):
        """Outer quadrature in normal-score space: Gauss-Legendre per grid cell plus tails."""
        m = self.model
        zg = m.z_from_x1(self.grid)
        t, tw = gauss_legendre(self.outer_order)
        a, b = zg[:-1], zg[1:]
        z_in = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * t[None, :]
        w_in = (0.5 * (b - a))[:, None] * tw[None, :]
        tt, ttw = gauss_legendre(TAIL_ORDER)
        tails_z, tails_w = [], []
        for lo, hi in ((-ZMAX, zg[0]), (zg[-1], ZMAX)):
            tails_z.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * tt)
            tails_w.append(0.5 * (hi - lo) * ttw)
        z = np.concatenate([tails_z[0], z_in.ravel(), tails_z[1]])
        w = np.concatenate([tails_w[0], w_in.ravel(), tails_w[1]]) * norm.pdf(z)
        return m.x1_from_z(z), w / w.sum()

    @cached_property
    def sample(self) -> Sample:
        if self.mode == "quadrature":
            x1o, wo = self._outer
            r = self.model.rule(x1o, self.kinks)
            w = (wo[:, None] * r.w).ravel()
            return Sample(r.x1.ravel(), r.x2.ravel(), w, "quadrature", r.w.shape[1])
        if self.mode == "data":
            mdl = self.model
            return Sample(np.array(mdl.x1), np.array(mdl.x2), np.array(mdl.weights), "data")
        rng = np.random.default_rng(self.seed)
        x1, x2 = self.model.draw(self.n, rng)
        return Sample(x1, x2, np.full(self.n, 1.0 / self.n), "mc")

    @cached_property
    def outer_rule_w(self):
        """Conditional weights per outer node (quadrature mode)."""
        s = self.sample
        return s.rows(s.w) / s.rows(s.w).sum(axis=1, keepdims=True)

    @cached_property
    def sample_g(self):
        s = self.sample
        g1, g2 = self.gradient(s.x1, s.x2)
        if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
            raise NumericalError("gradient is not finite on the sample")
        return g1, g2

    @cached_property
    def sample_e1(self):
        """Dict of E1[g1], E1[g2], E1[g2^2] at the sample points."""
        s = self.sample
        g1, g2 = self.sample_g
        if s.mode == "quadrature":
            cw = self.outer_rule_w
            out = {}
            for key, v in (("g1", g1), ("g2", g2), ("g2sq", g2 * g2)):
                m = np.sum(cw * s.rows(v), axis=1)
                out[key] = np.repeat(m, s.inner)
            return out
        return self.e1_at(s.x1)

    def e1_at(self, x1):
        """E1[g1], E1[g2], E1[g2^2] at arbitrary first-period points."""
        x1 = np.asarray(x1, dtype=float)
        if isinstance(self.model, Empirical):
            d1, d2 = self.gradient(self.model.x1, self.model.x2)
            if self.dim != 1:
                d = self.dim
                sm = self.model.smooth(x1, np.concatenate([d1, d2], axis=1))
                return {"g1": sm[:, :d], "g2": sm[:, d:], "g2sq": None}
            sm = self.model.smooth(x1, np.column_stack([d1, d2, d2 * d2]))
            return {"g1": sm[:, 0], "g2": sm[:, 1], "g2sq": sm[:, 2]}
        return self._e1_table(x1)

    @cached_property
    def _table(self):
        from .criteria import OptimalStopping

        m = self.model
        zt = np.linspace(-TABLE_ZMAX, TABLE_ZMAX, TABLE_SIZE)
        r = m.rule(m.x1_from_z(zt), self.kinks)
        crit = self.criterion
        if isinstance(crit, OptimalStopping):
            c1, c2 = crit.l2.grad(r.x1, r.x2)
            c1 = np.broadcast_to(c1, r.shape)
            c2 = np.broadcast_to(c2, r.shape)
        else:
            c1, c2 = self.gradient(r.x1, r.x2)
        return zt, {"g1": r.expect(c1), "g2": r.expect(c2), "g2sq": r.expect(c2 * c2)}

    def _e1_table(self, x1):
        """Conditional expectations at arbitrary x1 by interpolation in normal-score space.

        The table is dense (``TABLE_SIZE`` nodes) and uses the exact kink-aware
        rule at each node. For stopping criteria the conditional law is only
        needed on the continuation branch; the stopping branch depends on x1
        alone and is evaluated exactly, so the exercise boundary stays sharp.
        """
        from .criteria import OptimalStopping

        m = self.model
        crit = self.criterion
        zt, tab = self._table
        z = np.clip(m.z_from_x1(x1), -TABLE_ZMAX, TABLE_ZMAX)
        out = {k: np.interp(z, zt, v) for k, v in tab.items()}
        if isinstance(crit, OptimalStopping):
            stop = crit.region(m)(x1) == 1
            a1, _ = crit.l1.grad(x1, x1)
            a1 = np.broadcast_to(a1, np.shape(x1))
            out["g1"] = np.where(stop, a1, out["g1"])
            out["g2"] = np.where(stop, 0.0, out["g2"])
            out["g2sq"] = np.where(stop, 0.0, out["g2sq"])
        return out

    def _need_1d(self):
        if self.dim != 1:
            raise ValueError("operation is only available for d = 1")

    def matches(self, criterion, model):
        return criterion is self.criterion and model is self.model


def get_problem(criterion, model, problem=None, **kw) -> Problem:
    if problem is not None:
        if not problem.matches(criterion, model):
            raise ValueError("problem was built for a different criterion or model")
        return problem
    return Problem(criterion, model, **kw)
