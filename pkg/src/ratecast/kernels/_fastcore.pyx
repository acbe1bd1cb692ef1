# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot inner loops (see _pycore for the
reference semantics; both backends must agree to float precision)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log

cnp.import_array()


def fracdiff_apply(x, coeffs):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cv = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], K = cv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.empty(n)
    cdef Py_ssize_t t, k, kmax
    cdef double s
    for t in range(n):
        kmax = t if t < K - 1 else K - 1
        s = 0.0
        for k in range(kmax + 1):
            s += cv[k] * xv[t - k]
        y[t] = s
    return y


def garch_recursion(eps, double omega, alpha, beta, double sigma0_sq):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ev = np.ascontiguousarray(eps, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] av = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t n = ev.shape[0], na = av.shape[0], nb = bv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sigma2 = np.empty(n)
    cdef Py_ssize_t t, j
    cdef double s, e2, s2
    sigma2[0] = sigma0_sq
    for t in range(1, n):
        s = omega
        for j in range(na):
            e2 = ev[t - 1 - j] * ev[t - 1 - j] if t - 1 - j >= 0 else sigma0_sq
            s += av[j] * e2
        for j in range(nb):
            s2 = sigma2[t - 1 - j] if t - 1 - j >= 0 else sigma0_sq
            s += bv[j] * s2
        sigma2[t] = s
    return sigma2


def farima_garch_recursion(y, coeffs, double mu, double lam, phi, psi,
                           double omega, alpha, beta, double sigma0_sq):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cv = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pv = np.ascontiguousarray(phi, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qv = np.ascontiguousarray(psi, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] av = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], K = cv.shape[0]
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], np_ = pv.shape[0], nq = qv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] eps = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sigma2 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.empty(n)
    cdef Py_ssize_t t, j, k, kmax
    cdef double s, e2, s2, wv, e
    for t in range(n):
        if t == 0:
            s = sigma0_sq
        else:
            s = omega
            for j in range(na):
                e2 = eps[t - 1 - j] * eps[t - 1 - j] if t - 1 - j >= 0 else sigma0_sq
                s += av[j] * e2
            for j in range(nb):
                s2 = sigma2[t - 1 - j] if t - 1 - j >= 0 else sigma0_sq
                s += bv[j] * s2
        sigma2[t] = s
        u[t] = yv[t] - mu - lam * sqrt(s)
        kmax = t if t < K - 1 else K - 1
        wv = 0.0
        for k in range(kmax + 1):
            wv += cv[k] * u[t - k]
        w[t] = wv
        e = wv
        for j in range(np_):
            if t - 1 - j >= 0:
                e -= pv[j] * w[t - 1 - j]
        for j in range(nq):
            if t - 1 - j >= 0:
                e -= qv[j] * eps[t - 1 - j]
        eps[t] = e
    return eps, sigma2, u, w


def hmm_forward(B, pi, A):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] piv = np.ascontiguousarray(pi, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t n = Bv.shape[0], k = Bv.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] alpha = np.empty((n, k))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.empty(n)
    cdef Py_ssize_t t, i, j
    cdef double s, tot, ll, tiny
    tiny = np.finfo(float).tiny
    tot = 0.0
    for i in range(k):
        alpha[0, i] = piv[i] * Bv[0, i]
        tot += alpha[0, i]
    if tot <= 0:
        tot = tiny
    c[0] = tot
    for i in range(k):
        alpha[0, i] /= tot
    for t in range(1, n):
        tot = 0.0
        for j in range(k):
            s = 0.0
            for i in range(k):
                s += alpha[t - 1, i] * Av[i, j]
            s *= Bv[t, j]
            alpha[t, j] = s
            tot += s
        if tot <= 0:
            tot = tiny
        c[t] = tot
        for j in range(k):
            alpha[t, j] /= tot
    ll = 0.0
    for t in range(n):
        ll += log(c[t])
    return alpha, c, ll


def hmm_backward(B, A, c):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = Bv.shape[0], k = Bv.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] beta = np.empty((n, k))
    cdef Py_ssize_t t, i, j
    cdef double s
    for i in range(k):
        beta[n - 1, i] = 1.0
    for t in range(n - 2, -1, -1):
        for i in range(k):
            s = 0.0
            for j in range(k):
                s += Av[i, j] * Bv[t + 1, j] * beta[t + 1, j]
            beta[t, i] = s / cv[t + 1]
    return beta
