"""Dispatch over (metric, constraint) pairs and the ordering checks between them."""

from __future__ import annotations

from . import adapted as _ad
from . import wasserstein as _ws
from .criteria import OptimalStopping
from .problem import get_problem
from .reports import CONSTRAINTS, METRICS, SensitivityReport

SUPPORTED = {
    ("adapted", "none"), ("adapted", "M"), ("adapted", "m1"), ("adapted", "M_m1"),
    ("standard", "none"), ("standard", "M"),
}


def supported(metric, constraint, p=2.0):
    if (metric, constraint) not in SUPPORTED:
        return False
    return not (metric == "standard" and constraint == "M" and float(p) != 2.0)


def sensitivity(criterion, model, p=2.0, constraint="none", metric="adapted", *, problem=None, **kw) -> SensitivityReport:
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    if constraint not in CONSTRAINTS:
        raise ValueError(f"constraint must be one of {CONSTRAINTS}")
    pb = get_problem(criterion, model, problem, **kw)
    if metric == "standard":
        if constraint == "none":
            return _ws.wasserstein_unconstrained_sensitivity(criterion, model, p, problem=pb)
        if constraint == "M":
            return _ws.wasserstein_martingale_sensitivity(criterion, model, p, problem=pb)
        raise ValueError("the standard metric supports constraints 'none' and 'M' only")
    if isinstance(criterion, OptimalStopping):
        return _ad.optimal_stopping_sensitivities(criterion, model, p, constraint, problem=pb)
    fn = {
        "none": _ad.adapted_unconstrained_sensitivity,
        "M": _ad.adapted_martingale_sensitivity,
        "m1": _ad.marginal_hedge_and_sensitivity,
        "M_m1": _ad.martingale_marginal_hedge_and_sensitivity,
    }[constraint]
    return fn(criterion, model, p, problem=pb)


def sensitivities(criterion, model, p=2.0, pairs=None, *, problem=None, **kw):
    """Reports keyed by (metric, constraint); unconstrained values are always included."""
    pb = get_problem(criterion, model, problem, **kw)
    pairs = list(pairs) if pairs is not None else sorted(SUPPORTED)
    for m in {m for m, _ in pairs}:
        if (m, "none") not in pairs:
            pairs.insert(0, (m, "none"))
    out = {}
    for m, c in pairs:
        if supported(m, c, p):
            out[(m, c)] = sensitivity(criterion, model, p, c, m, problem=pb)
    return out


ORDERINGS = [
    (("adapted", "M_m1"), ("adapted", "m1")),
    (("adapted", "m1"), ("adapted", "none")),
    (("adapted", "M_m1"), ("adapted", "M")),
    (("adapted", "M"), ("adapted", "none")),
    (("adapted", "M"), ("standard", "M")),
    (("standard", "M"), ("standard", "none")),
    (("adapted", "none"), ("standard", "none")),
]


def check_ordering(reports: dict, slack_se: float = 2.0, atol: float = 1e-9):
    """List of violated inequalities lo <= hi (with s.e. slack) among available reports."""
    bad = []
    for lo, hi in ORDERINGS:
        if lo in reports and hi in reports:
            a, b = reports[lo], reports[hi]
            tol = slack_se * (a.stderr + b.stderr) + atol * max(1.0, abs(b.value))
            if a.value > b.value + tol:
                bad.append({"lower": "/".join(lo), "upper": "/".join(hi),
                            "lower_value": a.value, "upper_value": b.value})
    return bad
