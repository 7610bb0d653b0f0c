"""Sensitivities and optimal hedges under adapted-Wasserstein deviations.

Hedges are functions of x1 on the working grid. The compensated gradient is
(E1[g1], g2); a buy-and-hold hedge h shifts it by (-h, h) and a vanilla hedge
f by (f, 0). Every optimiser is pointwise in x1 because the objective
separates over the first-period conditional laws.
"""

from __future__ import annotations

import numpy as np

from ._kernels import solve_foc
from .criteria import OptimalStopping
from .errors import NumericalError
from .hedges import HedgeFunction
from .problem import Problem, block_norm, get_problem, grad_np
from .reports import SensitivityReport

STEP_TOL = 1e-13
MAXITER = 400


def _pprime(p):
    p = float(p)
    if not p > 1.0:
        raise ValueError("p must be greater than 1")
    return p / (p - 1.0)


def _check_finite(pb: Problem):
    g1, g2 = pb.sample_g
    return g1, g2


def _need_1d(pb: Problem):
    if pb.dim != 1:
        raise ValueError("adapted hedges are only computed for d = 1")


def _solve(a, b, w, pprime, alpha, h0, where):
    h, res, ok = solve_foc(a, b, w, pprime, alpha, h0, STEP_TOL, MAXITER)
    if not np.all(ok):
        i = int(np.nonzero(~ok)[0][0])
        raise NumericalError(f"first-order condition did not converge at {where} node {i}",
                             {"node": i, "residual": float(res[i])})
    return h, res


# unconstrained ----------------------------------------------------------------

def adapted_unconstrained_sensitivity(criterion, model, p=2.0, *, problem=None, **kw) -> SensitivityReport:
    """Norm of the compensated gradient."""
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    _, g2 = _check_finite(pb)
    val, se = block_norm(pb.sample, pb.sample_e1["g1"], g2, pp)
    return SensitivityReport("none", "adapted", float(p), val, se)


# martingale constraint ----------------------------------------------------------

def _martingale_solution(pb: Problem, pprime):
    """Nodal hedge, nodal residual, and hedge values at the sample points."""
    _need_1d(pb)
    a, eg2 = pb.grid_e1g
    s = pb.sample
    e = pb.sample_e1
    h_grid = 0.5 * (a - eg2)
    if pprime == 2.0:
        res = 2.0 * (a - h_grid) - 2.0 * (eg2 + h_grid)
        return h_grid, res, 0.5 * (e["g1"] - e["g2"]), "closed_form"
    r = pb.grid_rule
    _, rg2 = pb.grid_g
    h_grid, _ = _solve(a, rg2, r.w, pprime, 1.0, h_grid, "grid")
    res = grad_np(a - h_grid, pprime) - np.sum(r.w * grad_np(rg2 + h_grid[:, None], pprime), axis=1)
    if s.mode == "quadrature":
        _, g2 = pb.sample_g
        a_o = s.rows(e["g1"])[:, 0]
        h0 = 0.5 * (a_o - s.rows(e["g2"])[:, 0])
        h_o, _ = _solve(a_o, s.rows(g2), pb.outer_rule_w, pprime, 1.0, h0, "outer")
        h_s = np.repeat(h_o, s.inner)
    else:
        h_s = np.interp(s.x1, pb.grid, h_grid)
    return h_grid, res, h_s, "root_finding"


def adapted_martingale_hedge(criterion, model, p=2.0, *, problem=None, **kw) -> HedgeFunction:
    """Optimal buy-and-hold hedge under the martingale constraint."""
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    h, _, _, _ = _martingale_solution(pb, pp)
    return HedgeFunction(pb.grid, h, "h")


def adapted_martingale_foc_residual(pb: Problem, h: HedgeFunction, p=2.0) -> float:
    """L2(mu1) norm of grad(E1 g1 - h) - E1[grad(g2 + h)] at the grid nodes."""
    pp = _pprime(p)
    a, _ = pb.grid_e1g
    r = pb.grid_rule
    _, rg2 = pb.grid_g
    hv = h(pb.grid)
    res = grad_np(a - hv, pp) - np.sum(r.w * grad_np(rg2 + hv[:, None], pp), axis=1)
    return pb.grid_l2(res)


def adapted_martingale_sensitivity(criterion, model, p=2.0, *, problem=None, **kw) -> SensitivityReport:
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    _, g2 = _check_finite(pb)
    h_grid, res, h_s, method = _martingale_solution(pb, pp)
    e = pb.sample_e1
    val, se = block_norm(pb.sample, e["g1"] - h_s, g2 + h_s, pp)
    diag = {"foc_residual": pb.grid_l2(res), "foc_residual_max": float(np.max(np.abs(res))),
            "method": method}
    if pp == 2.0 and e.get("g2sq") is not None:
        s = pb.sample
        inner = 0.5 * (e["g1"] + e["g2"]) ** 2 + e["g2sq"] - e["g2"] ** 2
        diag["closed_form_value"] = float(np.sqrt(max(s.mean(inner), 0.0)))
    return SensitivityReport("M", "adapted", float(p), val, se, {"h": HedgeFunction(pb.grid, h_grid, "h")}, diag)


# first-marginal constraint -------------------------------------------------------

def marginal_hedge_and_sensitivity(criterion, model, p=2.0, *, problem=None, **kw) -> SensitivityReport:
    """Vanilla hedge f = -E1[g1]; it cancels the first block exactly for every p."""
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    _need_1d(pb)
    _, g2 = _check_finite(pb)
    a, _ = pb.grid_e1g
    f = -a
    e = pb.sample_e1
    val, se = block_norm(pb.sample, e["g1"] - e["g1"], g2, pp)
    res = a + f
    diag = {"foc_residual": pb.grid_l2(res), "method": "closed_form"}
    return SensitivityReport("m1", "adapted", float(p), val, se, {"f": HedgeFunction(pb.grid, f, "f")}, diag)


def _mm1_solution(pb: Problem, pprime):
    _need_1d(pb)
    _, eg2 = pb.grid_e1g
    e = pb.sample_e1
    s = pb.sample
    if pprime == 2.0:
        h_grid = -eg2
        return h_grid, -2.0 * (eg2 + h_grid), -e["g2"], "closed_form"
    r = pb.grid_rule
    _, rg2 = pb.grid_g
    zero = np.zeros_like(eg2)
    h_grid, _ = _solve(zero, rg2, r.w, pprime, 0.0, -eg2, "grid")
    res = -np.sum(r.w * grad_np(rg2 + h_grid[:, None], pprime), axis=1)
    if s.mode == "quadrature":
        _, g2 = pb.sample_g
        h0 = -s.rows(e["g2"])[:, 0]
        h_o, _ = _solve(np.zeros_like(h0), s.rows(g2), pb.outer_rule_w, pprime, 0.0, h0, "outer")
        h_s = np.repeat(h_o, s.inner)
    else:
        h_s = np.interp(s.x1, pb.grid, h_grid)
    return h_grid, res, h_s, "root_finding"


def martingale_marginal_hedge_and_sensitivity(criterion, model, p=2.0, *, problem=None, **kw) -> SensitivityReport:
    """Joint buy-and-hold and vanilla hedges; h solves E1[grad(g2 + h)] = 0 and f = h - E1[g1]."""
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    _, g2 = _check_finite(pb)
    h_grid, res, h_s, method = _mm1_solution(pb, pp)
    a, _ = pb.grid_e1g
    f_grid = h_grid - a
    val, se = block_norm(pb.sample, np.zeros_like(h_s), g2 + h_s, pp)
    diag = {"foc_residual": pb.grid_l2(res), "foc_residual_max": float(np.max(np.abs(res))), "method": method}
    hedges = {"h": HedgeFunction(pb.grid, h_grid, "h"), "f": HedgeFunction(pb.grid, f_grid, "f")}
    return SensitivityReport("M_m1", "adapted", float(p), val, se, hedges, diag)


# stopping problems ------------------------------------------------------------------

def optimal_stopping_sensitivities(criterion, model, p=2.0, constraint="none", *, problem=None, **kw):
    """Dispatch for stopping criteria, with the simplified forms reported alongside."""
    if not isinstance(criterion, OptimalStopping):
        raise TypeError("optimal_stopping_sensitivities needs an optimal stopping criterion")
    pb = get_problem(criterion, model, problem, **kw)
    pp = _pprime(p)
    if constraint == "none":
        return adapted_unconstrained_sensitivity(criterion, model, p, problem=pb)
    if constraint == "M":
        return adapted_martingale_sensitivity(criterion, model, p, problem=pb)
    if constraint == "m1":
        rep = marginal_hedge_and_sensitivity(criterion, model, p, problem=pb)
        _, g2 = pb.sample_g
        simple, _ = block_norm(pb.sample, np.zeros_like(g2), g2, pp)
        rep.diagnostics["simplified_value"] = simple
        return rep
    if constraint == "M_m1":
        rep = martingale_marginal_hedge_and_sensitivity(criterion, model, p, problem=pb)
        # on the stopping region the second-block gradient vanishes, so h = 0 there
        stop = criterion.region(model)(pb.grid) == 1
        rep.diagnostics["hedge_on_stop_region_max"] = float(np.max(np.abs(rep.hedges["h"].values[stop]), initial=0.0))
        return rep
    raise ValueError(f"unknown constraint {constraint!r}")
