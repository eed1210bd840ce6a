# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled likelihood kernels.

Semantics match ``_fallback`` exactly; see there for the contract.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, NAN, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _pref(double k, bint piecewise, double alpha, double beta,
                         double gamma, double delta) noexcept nogil:
    if piecewise and k >= gamma:
        return exp(alpha * log(gamma)) + beta * (k - gamma) + delta
    if k <= 0.0:
        return delta
    return exp(alpha * log(k)) + delta


cdef inline void _neumaier(double* s, double* c, double v) noexcept nogil:
    cdef double t = s[0] + v
    if fabs(s[0]) >= fabs(v):
        c[0] += (s[0] - t) + v
    else:
        c[0] += (v - t) + s[0]
    s[0] = t


def preference_values(const double[::1] degrees, bint piecewise, double alpha,
                      double beta, double gamma, double delta):
    cdef Py_ssize_t K = degrees.shape[0], j
    out = np.empty(K)
    cdef double[::1] o = out
    with nogil:
        for j in range(K):
            o[j] = _pref(degrees[j], piecewise, alpha, beta, gamma, delta)
    return out


def log_b(const double[::1] degrees, const cnp.int64_t[::1] c_ptr,
          const cnp.int64_t[::1] c_idx, const double[::1] c_cnt,
          const double[::1] w, const double[::1] A, bint piecewise,
          double alpha, double beta, double gamma, double delta):
    cdef Py_ssize_t K = degrees.shape[0], T = A.shape[0], j, t, m
    cdef double s = 0.0, c = 0.0, tot, result
    cdef double* gv = <double*> malloc(max(K, 1) * sizeof(double))
    if gv == NULL:
        raise MemoryError()
    with nogil:
        for j in range(K):
            gv[j] = _pref(degrees[j], piecewise, alpha, beta, gamma, delta)
        result = 0.0
        for t in range(T):
            tot = 0.0
            for m in range(c_ptr[t], c_ptr[t + 1]):
                tot += c_cnt[m] * gv[c_idx[m]]
            if tot <= 0.0:
                result = NAN
                break
            if A[t] > 0.0:
                _neumaier(&s, &c, -A[t] * log(tot))
        if result == 0.0:
            for j in range(K):
                if w[j] > 0.0:
                    if gv[j] <= 0.0:
                        result = -INFINITY
                        break
                    _neumaier(&s, &c, w[j] * log(gv[j]))
        if result == 0.0:
            result = s + c
    free(gv)
    return result
