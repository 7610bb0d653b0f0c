# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: windowed Nadaraya-Watson smoothing and per-node FOC root finding."""

import numpy as np

from libc.math cimport NAN, exp, fabs, pow


cdef inline Py_ssize_t _lower_bound(const double[::1] a, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _upper_bound(const double[::1] a, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def nw_smooth(const double[::1] xq, const double[::1] xd, const double[::1] wd,
              const double[:, ::1] yd, double bandwidth, double cutoff):
    cdef Py_ssize_t nq = xq.shape[0]
    cdef Py_ssize_t k = yd.shape[1]
    cdef Py_ssize_t i, j, c, lo, hi
    cdef double half = cutoff * bandwidth
    cdef double inv = 1.0 / bandwidth
    cdef double u, kw, den
    out = np.empty((nq, k), dtype=np.float64)
    acc_arr = np.zeros(k, dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] acc = acc_arr
    with nogil:
        for i in range(nq):
            lo = _lower_bound(xd, xq[i] - half)
            hi = _upper_bound(xd, xq[i] + half)
            den = 0.0
            for c in range(k):
                acc[c] = 0.0
            for j in range(lo, hi):
                u = (xd[j] - xq[i]) * inv
                kw = wd[j] * exp(-0.5 * u * u)
                den = den + kw
                for c in range(k):
                    acc[c] = acc[c] + kw * yd[j, c]
            for c in range(k):
                if den > 0.0:
                    o[i, c] = acc[c] / den
                else:
                    o[i, c] = NAN
    return out


cdef inline double _grad(double y, double pp) noexcept nogil:
    if y == 0.0:
        return 0.0
    if y > 0.0:
        return pp * pow(y, pp - 1.0)
    return -pp * pow(-y, pp - 1.0)


cdef inline double _foc(double h, double a, const double[:, ::1] b, const double[:, ::1] w,
                        Py_ssize_t row, double pp, double alpha) noexcept nogil:
    cdef Py_ssize_t j
    cdef double s = 0.0
    for j in range(b.shape[1]):
        s = s + w[row, j] * _grad(b[row, j] + h, pp)
    return alpha * _grad(a - h, pp) - s


cdef inline double _foc_d(double h, double a, const double[:, ::1] b, const double[:, ::1] w,
                          Py_ssize_t row, double pp, double alpha, double* df) noexcept nogil:
    # value and h-derivative, one pow per term
    cdef Py_ssize_t j
    cdef double s = 0.0, ds = 0.0, y, t
    for j in range(b.shape[1]):
        y = fabs(b[row, j] + h)
        if y > 0.0:
            t = pow(y, pp - 2.0)
            s = s + w[row, j] * (b[row, j] + h) * t
            ds = ds + w[row, j] * t
    y = fabs(a - h)
    t = pow(y, pp - 2.0) if y > 0.0 else 0.0
    df[0] = -pp * (pp - 1.0) * (alpha * t + ds)
    return pp * (alpha * (a - h) * t - s)


def solve_foc(const double[::1] a, const double[:, ::1] b, const double[:, ::1] w,
              double pprime, double alpha, const double[::1] h0, double xtol, int maxiter):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i
    cdef int it
    cdef double lo, hi, flo, fhi, mid, fm, step, dm, nx, dx_old
    h_arr = np.empty(n, dtype=np.float64)
    r_arr = np.empty(n, dtype=np.float64)
    ok_arr = np.ones(n, dtype=np.uint8)
    cdef double[::1] h = h_arr
    cdef double[::1] res = r_arr
    cdef unsigned char[::1] ok = ok_arr
    with nogil:
        for i in range(n):
            mid = h0[i]
            fm = _foc(mid, a[i], b, w, i, pprime, alpha)
            if fm == 0.0:
                h[i] = mid
                res[i] = 0.0
                continue
            step = 1e-2 * (1.0 + fabs(mid))
            lo = mid
            hi = mid
            flo = fm
            fhi = fm
            it = 0
            while flo < 0.0 and it < maxiter:
                hi = lo
                lo = lo - step
                step = step * 2.0
                flo = _foc(lo, a[i], b, w, i, pprime, alpha)
                it = it + 1
            while fhi > 0.0 and it < maxiter:
                lo = hi
                hi = hi + step
                step = step * 2.0
                fhi = _foc(hi, a[i], b, w, i, pprime, alpha)
                it = it + 1
            if flo < 0.0 or fhi > 0.0:
                ok[i] = 0
                h[i] = mid
                res[i] = fabs(fm)
                continue
            # safeguarded Newton: bisect whenever the step leaves the bracket or stalls;
            # stop once the step or the bracket is below xtol relative to h
            it = 0
            mid = 0.5 * (lo + hi)
            dx_old = hi - lo
            while True:
                fm = _foc_d(mid, a[i], b, w, i, pprime, alpha, &dm)
                if fm == 0.0:
                    break
                if fm > 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= xtol * (1.0 + fabs(mid)):
                    break
                it = it + 1
                if it >= maxiter:
                    ok[i] = 0
                    break
                nx = mid - fm / dm if dm < 0.0 else lo - 1.0
                if nx <= lo or nx >= hi or 2.0 * fabs(nx - mid) > dx_old:
                    nx = 0.5 * (lo + hi)
                dx_old = fabs(nx - mid)
                mid = nx
                if dx_old <= xtol * (1.0 + fabs(mid)):
                    fm = _foc(mid, a[i], b, w, i, pprime, alpha)
                    break
            h[i] = mid
            res[i] = fabs(fm)
    return h_arr, r_arr, ok_arr.astype(bool)
