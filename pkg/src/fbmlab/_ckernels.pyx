# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Signatures mirror :mod:`fbmlab._pykernels` exactly; the dispatcher in
:mod:`fbmlab.kernels` picks one of the two at import time.
"""
import numpy as np

from libc.math cimport exp, fabs, isfinite, pow, sin, sqrt, M_PI


def euler_closed_form(
    const double[:, ::1] x0,
    const double[:, :, ::1] dB,
    double h,
    int f_code,
    double kappa,
    const double[::1] const_term,
    const double[:, ::1] famp,
    const double[:, ::1] ffreq,
    const double[::1] fphase,
    const double[:, ::1] gweight,
    const double[:, ::1] gcenter,
    const double[::1] gvar,
):
    cdef Py_ssize_t P = dB.shape[0]
    cdef Py_ssize_t n = dB.shape[1]
    cdef Py_ssize_t d = dB.shape[2]
    cdef Py_ssize_t Jf = famp.shape[0]
    cdef Py_ssize_t Jg = gweight.shape[0]
    cdef Py_ssize_t p, i, j, k
    cdef double phase, s, r2, diff, val, fk
    cdef Py_ssize_t bad = -1

    X_arr = np.empty((P, n + 1, d), dtype=np.float64)
    K_arr = np.zeros((P, n + 1, d), dtype=np.float64)
    cdef double[:, :, ::1] X = X_arr
    cdef double[:, :, ::1] K = K_arr
    cdef double[::1] bvec = np.empty(d, dtype=np.float64)
    cdef double[::1] gnorm = np.empty(max(Jg, 1), dtype=np.float64)
    for j in range(Jg):
        gnorm[j] = pow(4.0 * M_PI * gvar[j], -0.5 * d)

    for p in range(P):
        for k in range(d):
            X[p, 0, k] = x0[p, k]
        for i in range(n):
            for k in range(d):
                bvec[k] = const_term[k]
            for j in range(Jf):
                phase = fphase[j]
                for k in range(d):
                    phase += ffreq[j, k] * X[p, i, k]
                s = sin(phase)
                for k in range(d):
                    bvec[k] += famp[j, k] * s
            for j in range(Jg):
                r2 = 0.0
                for k in range(d):
                    diff = X[p, i, k] - gcenter[j, k]
                    r2 += diff * diff
                val = gnorm[j] * exp(-r2 / (4.0 * gvar[j]))
                for k in range(d):
                    bvec[k] += gweight[j, k] * val
            for k in range(d):
                if f_code == 1:
                    fk = -kappa * X[p, i, k]
                else:
                    fk = 0.0
                X[p, i + 1, k] = X[p, i, k] + h * fk + h * bvec[k] + dB[p, i, k]
                K[p, i + 1, k] = K[p, i, k] + h * bvec[k]
                if not isfinite(X[p, i + 1, k]):
                    if bad < 0 or i + 1 < bad:
                        bad = i + 1
    return X_arr, K_arr, bad


def hh_pair_sup(const double[:, ::1] w, const double[::1] t, double expo):
    cdef Py_ssize_t N = w.shape[0]
    cdef Py_ssize_t d = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best = 0.0, num, diff, q
    for i in range(N):
        for j in range(i + 1, N):
            num = 0.0
            for k in range(d):
                diff = w[j, k] - w[i, k]
                num += diff * diff
            if num == 0.0:
                continue
            q = sqrt(num) / (pow(fabs(t[j] - t[i]), expo) * sqrt(1.0 + fabs(t[i]) + fabs(t[j])))
            if q > best:
                best = q
    return best


def holder_pair_sup(const double[:, ::1] y, const double[:, ::1] x, double gamma):
    cdef Py_ssize_t N = y.shape[0]
    cdef Py_ssize_t p = y.shape[1]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best = 0.0, num, den, diff, q
    for i in range(N):
        for j in range(i + 1, N):
            den = 0.0
            for k in range(d):
                diff = x[j, k] - x[i, k]
                den += diff * diff
            if den == 0.0:
                continue
            num = 0.0
            for k in range(p):
                diff = y[j, k] - y[i, k]
                num += diff * diff
            q = sqrt(num) / pow(den, 0.5 * gamma)
            if q > best:
                best = q
    return best
