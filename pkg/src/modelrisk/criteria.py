"""Criteria g and their gradient fields.

A criterion is either linear in the law (expectation of a payoff) or the value
of a two-period optimal stopping problem solved by minimisation. All
sensitivities are computed on the linearised criterion, so for stopping
problems the stopping rule of the reference model is frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as _expr
from .errors import NumericalError
from .models import TwoPeriodModel, conditional_expectation
from .quadrature import ZMAX


class Payoff:
    """Function of (x1, x2) with gradient and registered kink sets."""

    def value(self, x1, x2):
        raise NotImplementedError

    def grad(self, x1, x2):
        raise NotImplementedError

    @property
    def kinks(self) -> tuple:
        return ()

    def scaled(self, lam: float) -> "Payoff":
        raise NotImplementedError


class Expression(Payoff):
    def __init__(self, text: str):
        self.text = text
        self.node = _expr.parse(text)
        self._kinks = tuple(self.node.kinks())

    def value(self, x1, x2):
        return self.node.eval(x1, x2)[0]

    def grad(self, x1, x2):
        _, d1, d2 = self.node.eval(x1, x2)
        return d1, d2

    @property
    def kinks(self):
        return self._kinks

    def scaled(self, lam):
        return Expression(f"{float(lam)!r} * ({self.text})")

    def __repr__(self):
        return f"Expression({self.text!r})"


class FunctionPayoff(Payoff):
    """Payoff from Python callables; gradients may be (n, d) for d > 1."""

    def __init__(self, value: Callable, grad: Callable, kinks: Sequence[Callable] = ()):
        self._value, self._grad, self._kinks = value, grad, tuple(kinks)

    def value(self, x1, x2):
        return self._value(x1, x2)

    def grad(self, x1, x2):
        return self._grad(x1, x2)

    @property
    def kinks(self):
        return self._kinks

    def scaled(self, lam):
        v, g = self._value, self._grad

        def grad(x1, x2):
            a, b = g(x1, x2)
            return lam * np.asarray(a), lam * np.asarray(b)

        return FunctionPayoff(lambda x1, x2: lam * np.asarray(v(x1, x2)), grad, self._kinks)


class Criterion:
    kind = "abstract"

    @property
    def kinks(self):
        return ()

    def scaled(self, lam):
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(Criterion):
    """g(mu) = E_mu[f(X1, X2)]."""

    payoff: Payoff
    kind = "linear"

    @property
    def kinks(self):
        return self.payoff.kinks

    def scaled(self, lam):
        return Linear(self.payoff.scaled(lam))


@dataclass(frozen=True)
class StoppingRegion:
    """Piecewise-constant stopping rule in x1: cut points and the rule on each piece."""

    cuts: np.ndarray
    taus: np.ndarray

    def __call__(self, x1):
        return self.taus[np.searchsorted(self.cuts, np.asarray(x1, dtype=float), side="right")]

    @property
    def switches(self):
        return int(self.cuts.size)


@dataclass(frozen=True)
class OptimalStopping(Criterion):
    """g(mu) = inf over stopping times of E_mu[l_tau], tau in {1, 2}."""

    l1: Payoff
    l2: Payoff
    kind = "optimal_stopping"
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def kinks(self):
        return tuple(self.l1.kinks) + tuple(self.l2.kinks)

    def scaled(self, lam):
        return OptimalStopping(self.l1.scaled(lam), self.l2.scaled(lam))

    def decision(self, model, x1):
        """l1(x1) - E[l2 | X1 = x1]; stop at the first date where this is <= 0."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        cont = conditional_expectation(model, x1, self.l2.value, self.l2.kinks)
        return np.asarray(self.l1.value(x1, x1), dtype=float) - cont

    def region(self, model) -> StoppingRegion:
        key = id(model)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is model:
            return hit[1]
        reg = _build_region(self, model)
        self._cache[key] = (model, reg)
        return reg


def _build_region(crit: OptimalStopping, model: TwoPeriodModel, scan: int = 2001) -> StoppingRegion:
    if hasattr(model, "x1_from_z"):
        xs = np.unique(model.x1_from_z(np.linspace(-ZMAX, ZMAX, scan)))
    else:
        xs = model.grid(scan)
    d = crit.decision(model, xs)
    if not np.all(np.isfinite(d)):
        raise NumericalError("continuation value is not finite")
    tau = np.where(d <= 0.0, 1, 2)
    idx = np.nonzero(tau[:-1] != tau[1:])[0]
    lo, hi = xs[idx].copy(), xs[idx + 1].copy()
    tlo = tau[idx]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        tm = np.where(crit.decision(model, mid) <= 0.0, 1, 2)
        same = tm == tlo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    cuts = 0.5 * (lo + hi)
    taus = np.concatenate([tau[:1], tau[idx + 1]]) if idx.size else tau[:1]
    return StoppingRegion(cuts, taus)


# factories -----------------------------------------------------------------

def forward_start() -> Linear:
    """Forward-start call (x2 - x1)^+."""
    return Linear(Expression("max(x2 - x1, 0)"))


def constant(c: float = 1.0) -> Linear:
    return Linear(Expression(repr(float(c))))


def expression(text: str) -> Linear:
    return Linear(Expression(text))


def american_put(strike: float = 0.8, rate: float = 0.05, discount_convention: str = "t12") -> OptimalStopping:
    """Two-date put with discounted strikes, exercise chosen to minimise the payoff.

    ``t12`` discounts the two exercise dates by one and two periods; ``t01``
    by zero and one period.
    """
    if discount_convention == "t12":
        k1, k2 = float(strike * np.exp(-rate)), float(strike * np.exp(-2.0 * rate))
    elif discount_convention == "t01":
        k1, k2 = float(strike), float(strike * np.exp(-rate))
    else:
        raise ValueError("discount_convention must be 't12' or 't01'")
    return OptimalStopping(Expression(f"max({k1!r} - x1, 0)"), Expression(f"max({k2!r} - x2, 0)"))


# operations ----------------------------------------------------------------

def _split(x):
    if isinstance(x, tuple) and len(x) == 2:
        return np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float)
    a = np.asarray(x, dtype=float)
    d = a.shape[-1] // 2
    if d == 1:
        return a[..., 0], a[..., 1]
    return a[..., :d], a[..., d:]


def stopping_rule(criterion: OptimalStopping, model: TwoPeriodModel, x1):
    """1 where stopping at the first date is optimal (ties included), else 2."""
    if not isinstance(criterion, OptimalStopping):
        raise TypeError("stopping_rule needs an optimal stopping criterion")
    out = criterion.region(model)(x1)
    return int(out) if np.ndim(x1) == 0 else out


def gradient(criterion: Criterion, model: TwoPeriodModel | None, x):
    """Gradient field of the linear derivative at points ``x`` = (x1, x2)."""
    x1, x2 = _split(x)
    if isinstance(criterion, Linear):
        g1, g2 = criterion.payoff.grad(x1, x2)
        shape = np.broadcast(x1, x2).shape
        return np.broadcast_to(g1, shape).astype(float), np.broadcast_to(g2, shape).astype(float)
    if isinstance(criterion, OptimalStopping):
        if model is None:
            raise ValueError("a model is needed to evaluate the stopping rule")
        shape = np.broadcast(x1, x2).shape
        stop = np.broadcast_to(criterion.region(model)(x1) == 1, shape)
        a1, _ = criterion.l1.grad(x1, x2)
        b1, b2 = criterion.l2.grad(x1, x2)
        g1 = np.where(stop, np.broadcast_to(a1, shape), np.broadcast_to(b1, shape))
        g2 = np.where(stop, 0.0, np.broadcast_to(b2, shape))
        return g1.astype(float), g2.astype(float)
    raise TypeError(f"unsupported criterion {criterion!r}")


def compensated_gradient(criterion: Criterion, model: TwoPeriodModel, x):
    """(E[grad_1 | X1], grad_2) at points ``x``."""
    x1, x2 = _split(x)
    x1a = np.atleast_1d(x1)
    c1 = conditional_expectation(model, x1a, lambda a, b: gradient(criterion, model, (a, b))[0],
                                 criterion.kinks)
    _, g2 = gradient(criterion, model, (x1, x2))
    c1 = np.broadcast_to(c1.reshape(np.shape(x1)) if np.ndim(x1) else c1[0], np.shape(g2))
    return np.array(c1, dtype=float), g2


def payoff_value(criterion: Criterion, model: TwoPeriodModel | None, x1, x2):
    """Pointwise value of the (frozen) linear derivative."""
    if isinstance(criterion, Linear):
        return np.asarray(criterion.payoff.value(x1, x2), dtype=float)
    if model is None:
        raise ValueError("a model is needed to evaluate the stopping rule")
    stop = criterion.region(model)(x1) == 1
    return np.where(stop, criterion.l1.value(x1, x2), criterion.l2.value(x1, x2)).astype(float)


def criterion_value(criterion: Criterion, sample, model: TwoPeriodModel | None = None, weights=None) -> float:
    """Weighted mean of the payoff (stopping rule of ``model`` frozen) over ``sample``."""
    x1, x2 = _split(sample)
    n = np.shape(x1)[0] if np.ndim(x1) else 0
    if n == 0:
        raise ValueError("empty sample")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise ValueError("sample weights sum to zero")
    v = payoff_value(criterion, model, x1, x2)
    return float(np.sum(w * v) / w.sum())
