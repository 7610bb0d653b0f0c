"""Sensitivities under standard Wasserstein deviations.

The martingale-constrained value minimises, over buy-and-hold hedges
h(x1)(x2 - x1), the norm of the hedged gradient

    (g1 + h'(x1)(x2 - x1) - h(x1), g2 + h(x1)).

Two independent routes are provided for p = 2: a direct least-squares solve
over piecewise-linear hedges, and (d = 1) a Nystrom solve of the integral
equation satisfied by the optimal hedge. They are meant to be compared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import eigvalsh_tridiagonal, solve_triangular
from scipy.sparse.linalg import spsolve

from .errors import NumericalError
from .hedges import HedgeFunction, TensorHedge, cell_basis, _corners
from .problem import Problem, block_norm, get_problem
from .reports import SensitivityReport

RIDGE = 1e-10


def _pprime(p):
    p = float(p)
    if not p > 1.0:
        raise ValueError("p must be greater than 1")
    return p / (p - 1.0)


def _need_p2(p):
    if float(p) != 2.0:
        raise ValueError("the martingale-constrained standard sensitivity is only implemented for p = 2")


def wasserstein_unconstrained_sensitivity(criterion, model, p=2.0, *, problem=None, **kw) -> SensitivityReport:
    """Norm of the plain gradient field."""
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    g1, g2 = pb.sample_g
    val, se = block_norm(pb.sample, g1, g2, pp)
    return SensitivityReport("none", "standard", float(p), val, se)


def hedged_gradient(pb: Problem, h):
    """Hedged gradient blocks at the sample points for a hedge ``h``."""
    s = pb.sample
    g1, g2 = pb.sample_g
    if isinstance(h, TensorHedge):
        hv = h(s.x1)
        J = h.jacobian(s.x1)
        dx = s.x2 - s.x1
        return g1 + np.einsum("nik,ni->nk", J, dx) - hv, g2 + hv
    hv = h(s.x1)
    return g1 + h.derivative(s.x1) * (s.x2 - s.x1) - hv, g2 + hv


def evaluate_U_M(criterion, model, h, p=2.0, *, problem=None, with_stderr=False, **kw):
    """Norm of the gradient hedged by the buy-and-hold position ``h``."""
    pp = _pprime(p)
    pb = get_problem(criterion, model, problem, **kw)
    phi1, phi2 = hedged_gradient(pb, h)
    val, se = block_norm(pb.sample, phi1, phi2, pp)
    return (val, se) if with_stderr else val


# direct minimisation ------------------------------------------------------------------

def _design_1d(grid, x1, x2):
    """Sparse rows of the hedge map for the hat basis: block 1 and block 2."""
    j, wl, wr, s = cell_basis(grid, x1)
    n, G = x1.size, grid.size
    dx = x2 - x1
    rows = np.repeat(np.arange(n), 2)
    cols = np.column_stack([j, j + 1]).ravel()
    b = np.column_stack([wl, wr]).ravel()
    db = np.column_stack([-s, s]).ravel() * np.repeat(dx, 2)
    A1 = sp.csr_matrix((db - b, (rows, cols)), shape=(n, G))
    A2 = sp.csr_matrix((b, (rows, cols)), shape=(n, G))
    return A1, A2


def _design_nd(grids, x1, x2):
    """Sparse rows for a multilinear vector hedge; unknowns ordered (node, component)."""
    n, d = x1.shape
    shape = tuple(g.size for g in grids)
    nn = int(np.prod(shape))
    coords = [cell_basis(g, x1[:, k]) for k, g in enumerate(grids)]
    dx = x2 - x1
    r1, c1, v1, r2, c2, v2 = [], [], [], [], [], []
    for idx, wt, dwt in _corners(coords, d):
        flat = np.ravel_multi_index(idx, shape)
        for i in range(d):
            col = flat * d + i
            for k in range(d):
                # block 1, component k: sum_i dh_i/dx_k dx_i - h_k
                val = dwt[k] * dx[:, i] - (wt if i == k else 0.0)
                r1.append(np.arange(n) * d + k)
                c1.append(col)
                v1.append(np.broadcast_to(val, (n,)))
            r2.append(np.arange(n) * d + i)
            c2.append(col)
            v2.append(wt)
    A1 = sp.csr_matrix((np.concatenate(v1), (np.concatenate(r1), np.concatenate(c1))), shape=(n * d, nn * d))
    A2 = sp.csr_matrix((np.concatenate(v2), (np.concatenate(r2), np.concatenate(c2))), shape=(n * d, nn * d))
    return A1, A2


def _min_eig(N):
    if N.shape[0] <= 1:
        return float(N.diagonal().min())
    off = N.diagonal(1)
    band = sp.triu(N, 2).nnz == 0
    if band:
        return float(eigvalsh_tridiagonal(N.diagonal(), off, select="i", select_range=(0, 0))[0])
    if N.shape[0] <= 3000:
        return float(np.linalg.eigvalsh(N.toarray())[0])
    return float("nan")


def assemble_normal_equations(pb: Problem, grid=None):
    """Normal matrix and right-hand side of the least-squares hedge problem."""
    s = pb.sample
    g1, g2 = pb.sample_g
    if pb.dim == 1:
        grid = pb.grid if grid is None else np.asarray(grid, float)
        A1, A2 = _design_1d(grid, s.x1, s.x2)
        w = s.w
        W = sp.diags(w)
        rhs = -(A1.T @ (w * g1) + A2.T @ (w * g2))
    else:
        grids = grid
        A1, A2 = _design_nd(grids, s.x1, s.x2)
        w = np.repeat(s.w, pb.dim)
        W = sp.diags(w)
        rhs = -(A1.T @ (w * g1.ravel()) + A2.T @ (w * g2.ravel()))
    N = (A1.T @ W @ A1 + A2.T @ W @ A2).tocsc()
    return N, np.asarray(rhs).ravel()


def direct_minimize_U_M(criterion, model, p=2.0, grid=None, *, problem=None, **kw):
    """Least-squares hedge over piecewise-linear functions on ``grid``.

    ``grid`` may be an int (node count on the model interval) or explicit nodes;
    for d > 1 pass a sequence of per-axis node arrays. Returns (hedge, value)
    and stores solver diagnostics on ``direct_minimize_U_M.last_diagnostics``.
    """
    _need_p2(p)
    pb = get_problem(criterion, model, problem, **kw)
    if pb.dim == 1:
        if grid is None:
            g = pb.grid
        elif np.ndim(grid) == 0:
            g = model.grid(int(grid))
        else:
            g = np.asarray(grid, dtype=float)
    else:
        if grid is None or np.ndim(grid) == 0:
            size = 9 if grid is None else int(grid)
            g = tuple(model.grid(size, axis=k) for k in range(pb.dim))
        else:
            g = tuple(np.asarray(a, dtype=float) for a in grid)
    N, rhs = assemble_normal_equations(pb, g)
    diag = {}
    asym = abs(N - N.T).max() if N.nnz else 0.0
    scale = max(abs(N).max(), 1e-300)
    diag["asymmetry"] = float(asym / scale)
    diag["min_eig"] = _min_eig(N)
    diag["trace"] = float(N.diagonal().sum())
    ridge = 0.0
    c = None
    if np.isfinite(diag["min_eig"]) and diag["min_eig"] <= 1e-14 * diag["trace"]:
        c = None
    else:
        c = _spsolve(N, rhs)
    if c is None:
        ridge = RIDGE * float(N.diagonal().mean() or 1.0)
        c = _spsolve(N + ridge * sp.identity(N.shape[0], format="csc"), rhs)
        if c is None:
            raise NumericalError("normal equations are singular even after ridge", diag)
    diag["ridge"] = ridge
    diag["normal_residual"] = float(np.linalg.norm(N @ c - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if pb.dim == 1:
        h = HedgeFunction(g, c, "h")
    else:
        shape = tuple(a.size for a in g) + (pb.dim,)
        h = TensorHedge(g, c.reshape(shape), "h")
    val = evaluate_U_M(criterion, model, h, 2.0, problem=pb)
    direct_minimize_U_M.last_diagnostics = diag
    return h, val


direct_minimize_U_M.last_diagnostics = {}


def _spsolve(N, rhs):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            c = spsolve(N, rhs)
        except Exception:  # noqa: BLE001 - singular factorisation
            return None
    c = np.atleast_1d(c)
    return c if np.all(np.isfinite(c)) else None


# Fredholm route ---------------------------------------------------------------------------

@dataclass
class FredholmSystem:
    """Discretised integral equation for the optimal martingale hedge (d = 1, p = 2).

    The hedge satisfies h = c0 + c1 k + u + K h with
    (K h)(x) = 2 int_l^x (k(x) - k(z)) q1(z) h(z) dz; ``kernel_matrix`` is its
    trapezoid Nystrom matrix, so the factor 2 is already inside.
    Stopping boundaries are grid nodes (``breaks``); gamma1 and gamma2 may
    jump there, so their left and right limits are kept separately.
    """

    grid: np.ndarray
    q1: np.ndarray
    v2: np.ndarray
    k: np.ndarray
    kernel_matrix: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    u: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray
    psi: np.ndarray
    a: np.ndarray
    b: np.ndarray
    det: float
    c0: float
    c1: float
    diagnostics: dict = field(default_factory=dict)
    breaks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    gamma1_left: np.ndarray | None = None
    gamma2_left: np.ndarray | None = None

    @property
    def hedge_values(self):
        return self.c0 * self.phi0 + self.c1 * self.phi1 + self.psi

    def left(self, which):
        arr = getattr(self, which + "_left")
        return getattr(self, which) if arr is None else arr


def _cumtrapz_lr(x, fl, fr):
    """Cumulative trapezoid using right limits at cell starts and left limits at cell ends."""
    cells = 0.5 * (fr[:-1] + fl[1:]) * np.diff(x)
    return np.concatenate([[0.0], np.cumsum(cells)])


def _integrals(grid, q1, v2, phi):
    """(2 int q1 phi, int v2 phi' + 2 x q1 phi); phi' is taken cell by cell so kinks are harmless."""
    dv = 0.5 * (v2[1:] + v2[:-1]) * np.diff(phi)
    return 2.0 * trapezoid(q1 * phi, grid), float(dv.sum()) + trapezoid(2.0 * grid * q1 * phi, grid)


def x1_breaks(criterion, model, grid=None):
    """Points in x1 where the gradient field may jump.

    For a stopping criterion these are the stopping boundaries and the kinks of
    the date-one payoff, which depends on x1 alone.
    """
    from scipy.optimize import brentq

    from .criteria import OptimalStopping

    if not isinstance(criterion, OptimalStopping) or model.dim != 1:
        return np.zeros(0)
    pts = list(criterion.region(model).cuts)
    x = model.grid() if grid is None else np.asarray(grid, dtype=float)
    for gap in criterion.l1.kinks:
        def f(t):
            return float(np.asarray(gap(np.array([t]), np.array([t])), dtype=float).ravel()[0])
        v = np.asarray(gap(x, x), dtype=float).ravel()
        for i in np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0):
            pts.append(brentq(f, x[i], x[i + 1], xtol=1e-14))
    return np.unique(np.asarray(pts, dtype=float))


def insert_breaks(grid, breaks):
    """Grid with the interior breaks as nodes, and their indices.

    A break within a quarter cell of a node moves that node, so no tiny cells appear.
    """
    x = np.asarray(grid, dtype=float).copy()
    for b in np.sort(np.asarray(breaks, dtype=float)):
        if not x[0] < b < x[-1]:
            continue
        j = int(np.searchsorted(x, b))
        near = j if x[j] - b < b - x[j - 1] else j - 1
        cell = x[j] - x[j - 1]
        if abs(x[near] - b) < 0.25 * cell and 0 < near < x.size - 1:
            x[near] = b
        else:
            x = np.insert(x, j, b)
    idx = np.array([int(np.searchsorted(x, b)) for b in breaks if x[0] < b < x[-1]], dtype=int)
    return x, idx


def _gammas(criterion, model, x):
    from .criteria import gradient

    rule = model.rule(x, criterion.kinks)
    g1, g2 = gradient(criterion, model, (rule.x1, rule.x2))
    dx = rule.x2 - rule.x1
    return rule.expect(dx * g1), rule.expect(g2 - g1), rule.expect(dx * dx)


def build_fredholm_system(criterion, model, grid=None, *, problem=None) -> FredholmSystem:
    """Assemble and solve the Nystrom system, including the two constants."""
    if model.dim != 1:
        raise ValueError("the integral-equation route is only available for d = 1")
    if grid is None:
        x = problem.grid if problem is not None else model.grid()
    elif np.ndim(grid) == 0:
        x = model.grid(int(grid))
    else:
        x = np.asarray(grid, dtype=float)
    x, bidx = insert_breaks(x, x1_breaks(criterion, model, x))

    gamma1, gamma2, m2 = _gammas(criterion, model, x)
    q1 = np.asarray(model.q1(x), dtype=float)
    v2 = q1 * m2
    if np.any(q1 <= 0) or np.any(v2 <= 0) or not np.all(np.isfinite(v2)):
        raise NumericalError("density or conditional variance vanishes on the working interval")
    # nodal values follow the region rule (right limits); left limits differ only at breaks
    g1l, g2l = gamma1.copy(), gamma2.copy()
    if bidx.size:
        xb = x[bidx]
        eps = 1e-9 * (1.0 + np.abs(xb))
        g1l[bidx], g2l[bidx], _ = _gammas(criterion, model, xb - eps)
        gamma1[bidx], gamma2[bidx], _ = _gammas(criterion, model, xb + eps)
    k = cumulative_trapezoid(1.0 / v2, x, initial=0.0)
    om = np.empty_like(x)
    om[0] = 0.5 * (x[1] - x[0])
    om[1:-1] = 0.5 * (x[2:] - x[:-2])
    om[-1] = 0.5 * (x[-1] - x[-2])
    K = 2.0 * (k[:, None] - k[None, :]) * (om * q1)[None, :]
    K = np.tril(K, -1)
    G2 = _cumtrapz_lr(x, q1 * g2l, q1 * gamma2)
    u = _cumtrapz_lr(x, (G2 - q1 * g1l) / v2, (G2 - q1 * gamma1) / v2)
    A = np.eye(x.size) - K
    sol = solve_triangular(A, np.column_stack([np.ones_like(x), k, u]), lower=True, unit_diagonal=True)
    phi0, phi1, psi = sol[:, 0], sol[:, 1], sol[:, 2]
    a0, b0 = _integrals(x, q1, v2, phi0)
    a1, b1 = _integrals(x, q1, v2, phi1)
    ap, bp = _integrals(x, q1, v2, psi)
    det = a0 * b1 - a1 * b0
    scale = max(abs(a0 * b1), abs(a1 * b0), 1e-300)
    diag = {"det": det, "det_relative": abs(det) / scale,
            "max_abs_phi": float(max(np.abs(phi0).max(), np.abs(phi1).max())),
            "breaks": x[bidx].tolist()}
    if not np.isfinite(det) or abs(det) <= 1e-12 * scale:
        raise NumericalError("degenerate constant system: a0*b1 - a1*b0 vanishes", diag)
    r0 = -G2[-1] - ap
    r1 = (-_cumtrapz_lr(x, q1 * g1l, q1 * gamma1)[-1]
          - _cumtrapz_lr(x, x * q1 * g2l, x * q1 * gamma2)[-1] - bp)
    c0, c1 = np.linalg.solve(np.array([[a0, a1], [b0, b1]]), np.array([r0, r1]))
    return FredholmSystem(x, q1, v2, k, K, gamma1, gamma2, u, phi0, phi1, psi,
                          np.array([a0, a1]), np.array([b0, b1]), float(det), float(c0), float(c1), diag,
                          bidx, g1l, g2l)


def solve_fredholm_hedge(system: FredholmSystem, criterion, model, *, problem=None, **kw):
    """Hedge c0 phi0 + c1 phi1 + psi and its hedged-gradient norm."""
    h = HedgeFunction(system.grid, system.hedge_values, "h")
    pb = get_problem(criterion, model, problem, **kw)
    return h, evaluate_U_M(criterion, model, h, 2.0, problem=pb)


def _one_sided_slope(t, f, at):
    """Derivative at ``at`` of the quadratic through three points."""
    t0, t1, t2 = t
    f0, f1, f2 = f
    l0 = ((at - t1) + (at - t2)) / ((t0 - t1) * (t0 - t2))
    l1 = ((at - t0) + (at - t2)) / ((t1 - t0) * (t1 - t2))
    l2 = ((at - t0) + (at - t1)) / ((t2 - t0) * (t2 - t1))
    return f0 * l0 + f1 * l1 + f2 * l2


def fredholm_defect(h: HedgeFunction, system: FredholmSystem):
    """Pointwise defect D = h' v2 + q1 gamma1 - int_l^x (gamma2 + 2h) q1 at interior nodes.

    Returns (nodes, D, weights). At a break the node appears twice, once with
    left and once with right limits, each carrying half its weight.
    """
    x, q1, v2 = system.grid, system.q1, system.v2
    hv = h(x)
    g1l, g2l = system.left("gamma1"), system.left("gamma2")
    I = _cumtrapz_lr(x, (g2l + 2.0 * hv) * q1, (system.gamma2 + 2.0 * hv) * q1)
    d = np.gradient(hv, x) * v2 + q1 * system.gamma1 - I
    w = np.empty_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0], w[-1] = 0.5 * (x[1] - x[0]), 0.5 * (x[-1] - x[-2])
    w = w * q1
    nodes, vals, wts = [x[1:-1]], [d[1:-1]], [w[1:-1]]
    for i in system.breaks:
        if i < 2 or i > x.size - 3:
            continue
        dl = _one_sided_slope(x[i - 2:i + 1], hv[i - 2:i + 1], x[i]) * v2[i] + q1[i] * g1l[i] - I[i]
        dr = _one_sided_slope(x[i:i + 3], hv[i:i + 3], x[i]) * v2[i] + q1[i] * system.gamma1[i] - I[i]
        vals[0][i - 1] = dr
        wts[0][i - 1] *= 0.5
        nodes.append(x[i:i + 1])
        vals.append(np.array([dl]))
        wts.append(np.array([0.5 * w[i]]))
    return np.concatenate(nodes), np.concatenate(vals), np.concatenate(wts)


def fredholm_residual(h: HedgeFunction, system: FredholmSystem) -> float:
    """L2(mu1) distance of the defect from its best constant, over interior nodes."""
    _, d, w = fredholm_defect(h, system)
    w = w / w.sum()
    d = d - np.dot(w, d)
    return float(np.sqrt(np.dot(w, d * d)))


def wasserstein_martingale_sensitivity(criterion, model, p=2.0, *, problem=None, cross_check=True, **kw):
    """Martingale-constrained value from the direct minimiser, with the integral-equation route as a check."""
    _need_p2(p)
    pb = get_problem(criterion, model, problem, **kw)
    h, val = direct_minimize_U_M(criterion, model, 2.0, problem=pb)
    _, se = evaluate_U_M(criterion, model, h, 2.0, problem=pb, with_stderr=True)
    diag = dict(direct_minimize_U_M.last_diagnostics)
    diag["foc_residual"] = diag["normal_residual"]
    hedges = {"h": h}
    if cross_check and pb.dim == 1:
        try:
            sysm = build_fredholm_system(criterion, model, problem=pb)
            hf, vf = solve_fredholm_hedge(sysm, criterion, model, problem=pb)
            diag.update({
                "fredholm_value": vf,
                "fredholm_relative_gap": abs(vf - val) / max(val, 1e-300),
                "fredholm_hedge_l2_gap": pb.grid_l2(hf(pb.grid) - h(pb.grid)) / max(pb.grid_l2(h(pb.grid)), 1e-300),
                "fredholm_residual": fredholm_residual(hf, sysm),
                "direct_residual": fredholm_residual(h, sysm),
                "c0": sysm.c0, "c1": sysm.c1, "det": sysm.det,
            })
            hedges["h_fredholm"] = hf
        except NumericalError as exc:
            diag["fredholm_error"] = str(exc)
    return SensitivityReport("M", "standard", 2.0, val, se, hedges, diag)
