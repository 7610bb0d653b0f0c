"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy versions
take over. Setting ``MODELRISK_PURE_PYTHON=1`` forces the NumPy path.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_c = None
if os.environ.get("MODELRISK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _c  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _c = None


def _pick(backend):
    use = backend or BACKEND
    if use not in ("cython", "python"):
        raise ValueError(f"unknown backend {use!r}")
    if use == "cython" and _c is None:
        raise ValueError("compiled kernels are not available")
    return use


def nw_smooth(xq, xd, wd, yd, bandwidth, cutoff=8.0, backend=None):
    yd = np.asarray(yd, dtype=float)
    vec = yd.ndim == 1
    if vec:
        yd = yd[:, None]
    if _pick(backend) == "cython":
        out = _c.nw_smooth(np.ascontiguousarray(xq, dtype=float), np.ascontiguousarray(xd, dtype=float),
                           np.ascontiguousarray(wd, dtype=float), np.ascontiguousarray(yd),
                           float(bandwidth), float(cutoff))
    else:
        out = _pykernels.nw_smooth(xq, xd, wd, yd, bandwidth, cutoff)
    return out[:, 0] if vec else out


def solve_foc(a, b, w, pprime, alpha=1.0, h0=None, xtol=1e-13, maxiter=200, backend=None):
    """Solve the scalar first-order condition per row; returns (h, |residual|, converged).

    Rows stop when the root is bracketed to ``xtol`` relative to h.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    h0 = np.zeros_like(a) if h0 is None else np.ascontiguousarray(h0, dtype=float)
    if _pick(backend) == "cython":
        return _c.solve_foc(a, b, w, float(pprime), float(alpha), h0, float(xtol), int(maxiter))
    return _pykernels.solve_foc(a, b, w, pprime, alpha, h0, xtol, maxiter)


def available_backends():
    return ["python"] + (["cython"] if _c is not None else [])
