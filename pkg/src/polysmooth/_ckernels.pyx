# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of the NumPy kernels; same operation order per point."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

from ._kernels_py import ChainResult

BACKEND_NAME = "cython"


cdef inline double _hermite(double f0, double f1, double d0, double d1,
                            double s, double h) noexcept nogil:
    cdef double s2 = s * s
    cdef double s3 = s2 * s
    return (f0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + d0 * h * (s3 - 2.0 * s2 + s)
            + f1 * (-2.0 * s3 + 3.0 * s2)
            + d1 * h * (s3 - s2))


cdef inline void _eta1(double t, double h, Py_ssize_t ncells, double norm,
                       const double[::1] r, const double[::1] dr,
                       const double[::1] s_tab, const double[::1] ds,
                       double* e, double* ep, double* epp) noexcept nogil:
    cdef double a = fabs(t)
    cdef double sign = 0.0
    cdef Py_ssize_t idx
    cdef double frac, rr, ss, rho
    if t > 0.0:
        sign = 1.0
    elif t < 0.0:
        sign = -1.0
    if a >= 0.5:
        e[0] = a
        ep[0] = sign
        epp[0] = 0.0
        return
    idx = <Py_ssize_t>(a / h)
    if idx > ncells - 1:
        idx = ncells - 1
    frac = a / h - idx
    rr = _hermite(r[idx], r[idx + 1], dr[idx], dr[idx + 1], frac, h)
    ss = _hermite(s_tab[idx], s_tab[idx + 1], ds[idx], ds[idx + 1], frac, h)
    if rr < 0.5:
        rr = 0.5
    if rr > 1.0:
        rr = 1.0
    if ss > 0.0:
        ss = 0.0
    rho = norm * exp(-1.0 / (1.0 - 4.0 * a * a))
    # clamp at |t|: the true kernel dominates it, so this only strips
    # one-ulp interpolation undershoot
    e[0] = a * (2.0 * rr - 1.0) - 2.0 * ss
    if e[0] < a:
        e[0] = a
    ep[0] = sign * (2.0 * rr - 1.0)
    epp[0] = 2.0 * rho


def eta_jet_batch(t, tables):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tt = \
        np.ascontiguousarray(t, dtype=np.float64).ravel()
    cdef Py_ssize_t m = tt.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ep = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] epp = np.empty(m)
    cdef double h = tables.h
    cdef double norm = tables.norm
    cdef Py_ssize_t ncells = tables.ncells
    cdef const double[::1] r = tables.r
    cdef const double[::1] dr = tables.dr
    cdef const double[::1] s_tab = tables.s
    cdef const double[::1] ds = tables.ds
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            _eta1(tt[i], h, ncells, norm, r, dr, s_tab, ds,
                  &e[i], &ep[i], &epp[i])
    shape = np.shape(np.asarray(t))
    return e.reshape(shape), ep.reshape(shape), epp.reshape(shape)


def uhat_chain(points, normals, offsets, lams, tables,
               want_grad=True, want_hess="none"):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] X = \
        np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] N = \
        np.ascontiguousarray(normals, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] C = \
        np.ascontiguousarray(offsets, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] L = \
        np.ascontiguousarray(lams, dtype=np.float64)

    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t q1 = N.shape[0]
    cdef Py_ssize_t q = q1 - 1

    cdef bint do_grad = bool(want_grad)
    cdef int hess_mode = 0
    if want_hess == "final":
        hess_mode = 1
    elif want_hess == "all":
        hess_mode = 2
    cdef bint need_grad = do_grad or hess_mode > 0

    cdef cnp.ndarray[cnp.float64_t, ndim=2] face_values = np.empty((m, q1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] values = np.empty((m, q1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] deltas = np.empty((m, q))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] eta_prime = np.empty((m, q))

    cdef cnp.ndarray[cnp.float64_t, ndim=3] grads = None
    cdef cnp.ndarray[cnp.float64_t, ndim=3] hess = None
    cdef cnp.ndarray[cnp.float64_t, ndim=4] hess_all = None
    if need_grad:
        grads = np.empty((m, q1, n))
    if hess_mode > 0:
        hess = np.zeros((m, n, n))
    if hess_mode == 2:
        hess_all = np.zeros((m, q1, n, n))

    cdef double h = tables.h
    cdef double norm = tables.norm
    cdef Py_ssize_t ncells = tables.ncells
    cdef const double[::1] tr = tables.r
    cdef const double[::1] tdr = tables.dr
    cdef const double[::1] ts = tables.s
    cdef const double[::1] tds = tables.ds

    cdef Py_ssize_t i, k, a, b
    cdef double acc, d, arg, lam, e, ep, epp, w, rank1, vmax, gd_a

    with nogil:
        for i in range(m):
            for k in range(q1):
                acc = C[k]
                for a in range(n):
                    acc += X[i, a] * N[k, a]
                face_values[i, k] = acc
            values[i, 0] = face_values[i, 0]
            if need_grad:
                for a in range(n):
                    grads[i, 0, a] = N[0, a]
            for k in range(1, q1):
                lam = L[k]
                d = values[i, k - 1] - face_values[i, k]
                deltas[i, k - 1] = d
                arg = lam * d
                _eta1(arg, h, ncells, norm, tr, tdr, ts, tds, &e, &ep, &epp)
                eta_prime[i, k - 1] = ep
                if fabs(arg) >= 0.5:
                    vmax = values[i, k - 1]
                    if face_values[i, k] > vmax:
                        vmax = face_values[i, k]
                    values[i, k] = vmax
                else:
                    values[i, k] = 0.5 * (values[i, k - 1]
                                          + face_values[i, k] + e / lam)
                if need_grad:
                    w = 0.5 * (1.0 - ep)
                    rank1 = 0.5 * lam * epp
                    if hess_mode > 0:
                        for a in range(n):
                            gd_a = grads[i, k - 1, a] - N[k, a]
                            for b in range(n):
                                hess[i, a, b] = (1.0 - w) * hess[i, a, b]
                                if rank1 > 0.0:
                                    hess[i, a, b] += rank1 * gd_a * \
                                        (grads[i, k - 1, b] - N[k, b])
                        if hess_mode == 2:
                            for a in range(n):
                                for b in range(n):
                                    hess_all[i, k, a, b] = hess[i, a, b]
                    for a in range(n):
                        gd_a = grads[i, k - 1, a] - N[k, a]
                        grads[i, k, a] = grads[i, k - 1, a] - w * gd_a

    return ChainResult(
        values=values,
        face_values=face_values,
        deltas=deltas,
        eta_prime=eta_prime,
        grads=grads if do_grad else None,
        hess=(hess_all if hess_mode == 2 else hess) if hess_mode > 0 else None,
    )
