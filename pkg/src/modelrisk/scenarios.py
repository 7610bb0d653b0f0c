"""Worst-case scenarios by pushing the reference law along the optimal direction.

For a hedged gradient phi = (phi1, phi2) the unit direction is
T_i = |phi_i|^(p'-2) phi_i / ||phi||^(p'-1), so E[|T1|^p + |T2|^p] = 1 and the
pushforward of X by X + rT sits at distance r from the reference law.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import adapted as _ad
from . import wasserstein as _ws
from .criteria import payoff_value
from .errors import NumericalError
from .problem import Problem, get_problem

RECENTRE_BINS = 64
DIAGONAL_BAND = 0.05


def _pprime(p):
    p = float(p)
    if not p > 1.0:
        raise ValueError("p must be greater than 1")
    return p / (p - 1.0)


def _pow_dir(phi, pprime):
    return np.sign(phi) * np.abs(phi) ** (pprime - 1.0)


@dataclass
class Direction:
    """Unit optimality direction for one (metric, constraint) pair."""

    metric: str
    constraint: str
    p: float
    problem: Problem
    scale: float
    h: object = None
    sample_phi: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def pprime(self):
        return _pprime(self.p)

    def _phi(self, x1, x2):
        pb = self.problem
        g1, g2 = pb.gradient(x1, x2)
        m, c = self.metric, self.constraint
        if m == "standard":
            if c == "none":
                return g1, g2
            hv = self.h(x1)
            return g1 + self.h.derivative(x1) * (x2 - x1) - hv, g2 + hv
        if c in ("m1", "M_m1"):
            hv = 0.0 if c == "m1" else self.h(x1)
            return np.zeros_like(g1), g2 + hv
        a = pb.e1_at(x1)["g1"]
        if c == "none":
            return a, g2
        hv = self.h(x1)
        return a - hv, g2 + hv

    def __call__(self, x1, x2):
        """Direction at arbitrary points (hedges and conditional means interpolated)."""
        if self.scale == 0.0:
            z = np.zeros(np.broadcast(x1, x2).shape)
            return z, z.copy()
        phi1, phi2 = self._phi(np.asarray(x1, float), np.asarray(x2, float))
        pp = self.pprime
        return _pow_dir(phi1, pp) / self.scale, _pow_dir(phi2, pp) / self.scale

    def on_sample(self):
        """Direction on the problem's own sample, using exact conditional values."""
        phi1, phi2 = self.sample_phi
        if self.scale == 0.0:
            return np.zeros_like(phi1), np.zeros_like(phi2)
        pp = self.pprime
        return _pow_dir(phi1, pp) / self.scale, _pow_dir(phi2, pp) / self.scale


def displacement_direction(criterion, model, p=2.0, constraint="M", metric="adapted", *, problem=None, **kw) -> Direction:
    """Optimal direction T built from the optimal hedge of the chosen constraint."""
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    g1, g2 = pb.sample_g
    h = None
    diag = {}
    if metric == "standard":
        if constraint == "none":
            phi = (g1, g2)
        elif constraint == "M":
            h, val = _ws.direct_minimize_U_M(criterion, model, 2.0, problem=pb)
            phi = _ws.hedged_gradient(pb, h)
        else:
            raise ValueError("standard metric supports constraints 'none' and 'M'")
    elif metric == "adapted":
        e = pb.sample_e1
        if constraint == "none":
            phi = (e["g1"], g2)
        elif constraint == "M":
            hg, _, hs, _ = _ad._martingale_solution(pb, pp)
            h = _ad.HedgeFunction(pb.grid, hg, "h")
            phi = (e["g1"] - hs, g2 + hs)
        elif constraint == "m1":
            phi = (np.zeros_like(g1), g2)
        elif constraint == "M_m1":
            hg, _, hs, _ = _ad._mm1_solution(pb, pp)
            h = _ad.HedgeFunction(pb.grid, hg, "h")
            phi = (np.zeros_like(g1), g2 + hs)
        else:
            raise ValueError(f"unknown constraint {constraint!r}")
    else:
        raise ValueError(f"unknown metric {metric!r}")
    s = pb.sample
    nrm = s.mean(np.abs(phi[0]) ** pp + np.abs(phi[1]) ** pp) ** (1.0 / pp)
    if nrm <= 1e-14:
        warnings.warn("criterion is locally flat; returning the zero direction", RuntimeWarning, stacklevel=2)
        scale = 0.0
    else:
        scale = nrm ** (pp - 1.0)
    diag["norm"] = float(nrm)
    return Direction(metric, constraint, float(p), pb, float(scale), h, phi, diag)


# pushforward -----------------------------------------------------------------------------

def diagonal_mass(x1, x2, band=DIAGONAL_BAND, w=None):
    near = np.abs(np.asarray(x2) - np.asarray(x1)) < band
    return float(np.mean(near) if w is None else np.sum(w * near))


def _bin_labels(x1, bins):
    """Equal-mass bin index of each point, bins ordered by x1."""
    order = np.argsort(x1, kind="stable")
    lab = np.empty(x1.size, dtype=int)
    for k, ix in enumerate(np.array_split(order, bins)):
        lab[ix] = k
    return lab


def recentre(x1, x2, bins=RECENTRE_BINS):
    """Shift x2 so that its mean equals the mean of x1 within equal-mass bins of x1.

    Returns the shifted x2 and the largest absolute bin drift before the shift.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    lab = _bin_labels(x1, bins)
    cnt = np.bincount(lab, minlength=bins)
    drift = np.bincount(lab, weights=x2 - x1, minlength=bins) / np.maximum(cnt, 1)
    return x2 - drift[lab], float(np.max(np.abs(drift)))


def binned_martingale_gap(x1, x2, bins=RECENTRE_BINS):
    """Per-bin |mean(x2 - x1)| and its standard error, over equal-mass bins of x1."""
    x1 = np.asarray(x1, dtype=float)
    d = np.asarray(x2, dtype=float) - x1
    lab = _bin_labels(x1, bins)
    cnt = np.bincount(lab, minlength=bins)
    mean = np.bincount(lab, weights=d, minlength=bins) / np.maximum(cnt, 1)
    ss = np.bincount(lab, weights=(d - mean[lab]) ** 2, minlength=bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(cnt > 1, np.sqrt(ss / np.maximum(cnt - 1, 1) / np.maximum(cnt, 1)), np.inf)
    return np.abs(mean), se


@dataclass
class WorstCaseScenario:
    r: float
    metric: str
    constraint: str
    base: np.ndarray
    displaced: np.ndarray
    gain: float
    gain_stderr: float
    wp_distance: float
    recentred: bool = False
    recentre_drift: float = 0.0
    diagonal_mass_base: float = 0.0
    diagonal_mass_displaced: float = 0.0

    def summary(self):
        return {
            "r": self.r, "metric": self.metric, "constraint": self.constraint,
            "n": int(self.base.shape[0]),
            "gain": None if not np.isfinite(self.gain) else self.gain,
            "gain_stderr": self.gain_stderr, "wp_distance": self.wp_distance,
            "recentred": self.recentred, "recentre_drift": self.recentre_drift,
            "diagonal_mass_base": self.diagonal_mass_base,
            "diagonal_mass_displaced": self.diagonal_mass_displaced,
            "diagonal_mass_decrease": self.diagonal_mass_base - self.diagonal_mass_displaced,
            "first_marginal_unchanged": bool(np.array_equal(self.base[:, 0], self.displaced[:, 0])),
        }


def pushforward_scenario(model, T: Direction, r: float, n: int = 20_000, seed: int = 0,
                         recentre_flag: bool = False) -> WorstCaseScenario:
    """Draw n points from the model and move them by r T(x).

    Recentring applies only to martingale-constrained standard-metric
    directions, the one case where the move is not exactly martingale.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    pb = T.problem
    if model is not pb.model:
        raise ValueError("direction was built for a different model")
    rng = np.random.default_rng(seed)
    x1, x2 = model.draw(int(n), rng)
    t1, t2 = T(x1, x2)
    y1 = x1 + r * t1
    y2 = x2 + r * t2
    if T.constraint in ("m1", "M_m1"):
        y1 = x1.copy()
    p = T.p
    wp = float(np.mean(np.abs(y1 - x1) ** p + np.abs(y2 - x2) ** p) ** (1.0 / p))
    drift = 0.0
    did = False
    if recentre_flag and T.metric == "standard" and T.constraint in ("M", "M_m1") and r > 0:
        y2, drift = recentre(y1, y2)
        did = True
    crit = pb.criterion
    if r > 0:
        dv = (payoff_value(crit, model, y1, y2) - payoff_value(crit, model, x1, x2)) / r
        gain, gse = float(dv.mean()), float(dv.std(ddof=1) / np.sqrt(dv.size))
    else:
        gain, gse = float("nan"), 0.0
    return WorstCaseScenario(float(r), T.metric, T.constraint, np.column_stack([x1, x2]),
                             np.column_stack([y1, y2]), gain, gse, wp, did, drift,
                             diagonal_mass(x1, x2), diagonal_mass(y1, y2))


# first-order gains ---------------------------------------------------------------------------

@dataclass
class GainTable:
    radii: np.ndarray
    gains: np.ndarray
    stderr: np.ndarray
    extrapolated: float
    sensitivity: float

    @property
    def relative_error(self):
        return abs(self.extrapolated - self.sensitivity) / max(abs(self.sensitivity), 1e-300)

    def rows(self):
        return [(float(r), float(g), float(s)) for r, g, s in zip(self.radii, self.gains, self.stderr)]


def richardson(gains):
    """Two-level Richardson extrapolation for radii r, r/2, r/4."""
    g1, g2, g3 = gains
    r1 = 2.0 * g2 - g1
    r2 = 2.0 * g3 - g2
    return (4.0 * r2 - r1) / 3.0


def first_order_gain(criterion, model, direction: Direction, radii=(0.1, 0.05, 0.025)) -> GainTable:
    """(g(mu_r) - g(mu)) / r on the linearised criterion, common sample for all radii."""
    radii = np.asarray(radii, dtype=float)
    if radii.size != 3 or not np.allclose(radii[1:] / radii[:-1], 0.5):
        raise ValueError("radii must be r, r/2, r/4")
    pb = direction.problem
    if not pb.matches(criterion, model):
        raise ValueError("direction was built for a different criterion or model")
    s = pb.sample
    t1, t2 = direction.on_sample()
    base = payoff_value(criterion, model, s.x1, s.x2)
    gains, ses = [], []
    for r in radii:
        y1 = s.x1 + r * t1
        y2 = s.x2 + r * t2
        dv = (payoff_value(criterion, model, y1, y2) - base) / r
        if not np.all(np.isfinite(dv)):
            raise NumericalError("displaced payoff is not finite")
        gains.append(s.mean(dv))
        ses.append(s.stderr(dv))
    gains = np.array(gains)
    sens = direction.diagnostics.get("norm", 0.0)
    return GainTable(radii, gains, np.array(ses), float(richardson(gains)), float(sens))
