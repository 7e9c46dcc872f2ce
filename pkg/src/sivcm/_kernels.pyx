# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled local linear batch kernel (see ``_kernels_py`` for the contract)."""
import numpy as np

from libc.math cimport sqrt, fabs, NAN
from libc.stdlib cimport malloc, free


cdef inline double _kern(int kid, double t) noexcept nogil:
    if t < -1.0 or t > 1.0:
        return 0.0
    if kid == 0:
        return 0.75 * (1.0 - t * t)
    elif kid == 1:
        return 0.5
    return 1.0 - fabs(t)


cdef inline Py_ssize_t _lower_bound(const double[::1] u, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = u.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if u[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef int _cholesky(double* M, double* L, int d, double pivot_tol) noexcept nogil:
    """Lower factor of row-major M into L; returns 1 when a pivot is too small."""
    cdef int i, j, k
    cdef double s, scale = 0.0
    cdef int singular = 0
    for i in range(d):
        if fabs(M[i * d + i]) > scale:
            scale = fabs(M[i * d + i])
    if not scale > 0.0:
        singular = 1
    for i in range(d * d):
        L[i] = 0.0
    for j in range(d):
        s = M[j * d + j]
        for k in range(j):
            s -= L[j * d + k] * L[j * d + k]
        if s <= pivot_tol * scale:
            singular = 1
            s = 1.0
        L[j * d + j] = sqrt(s)
        for i in range(j + 1, d):
            s = M[i * d + j]
            for k in range(j):
                s -= L[i * d + k] * L[j * d + k]
            L[i * d + j] = s / L[j * d + j]
    return singular


cdef void _substitute(double* L, double* rhs, double* x, double* tmp, int d) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(d):
        s = rhs[i]
        for k in range(i):
            s -= L[i * d + k] * tmp[k]
        tmp[i] = s / L[i * d + i]
    for i in range(d - 1, -1, -1):
        s = tmp[i]
        for k in range(i + 1, d):
            s -= L[k * d + i] * x[k]
        x[i] = s / L[i * d + i]


def local_linear_batch(const double[::1] u_sorted, const double[:, ::1] z_sorted,
                       const double[::1] y_sorted, const double[::1] points,
                       double h, int kernel_id, double pivot_tol, double ridge_eps):
    cdef Py_ssize_t n = z_sorted.shape[0]
    cdef int q = <int> z_sorted.shape[1]
    cdef int d = 2 * q
    cdef Py_ssize_t m = points.shape[0]
    a_arr = np.empty((m, q), dtype=np.float64)
    b_arr = np.empty((m, q), dtype=np.float64)
    ridged_arr = np.zeros(m, dtype=np.uint8)
    status_arr = np.zeros(m, dtype=np.int8)
    count_arr = np.zeros(m, dtype=np.intp)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] b = b_arr
    cdef unsigned char[::1] ridged = ridged_arr
    cdef signed char[::1] status = status_arr
    cdef Py_ssize_t[::1] count = count_arr

    cdef double* S = <double*> malloc(d * d * sizeof(double))
    cdef double* L = <double*> malloc(d * d * sizeof(double))
    cdef double* rhs = <double*> malloc(d * sizeof(double))
    cdef double* x = <double*> malloc(d * sizeof(double))
    cdef double* tmp = <double*> malloc(d * sizeof(double))
    cdef double* v = <double*> malloc(d * sizeof(double))
    if S == NULL or L == NULL or rhs == NULL or x == NULL or tmp == NULL or v == NULL:
        free(S); free(L); free(rhs); free(x); free(tmp); free(v)
        raise MemoryError()

    cdef Py_ssize_t p, j
    cdef int r, c, nz
    cdef double pt, t, kw, yj, lift, inv_n = 1.0 / n
    try:
        with nogil:
            for p in range(m):
                pt = points[p]
                for r in range(d * d):
                    S[r] = 0.0
                for r in range(d):
                    rhs[r] = 0.0
                nz = 0
                j = _lower_bound(u_sorted, pt - h)
                while j < n and u_sorted[j] <= pt + h:
                    t = (u_sorted[j] - pt) / h
                    kw = _kern(kernel_id, t) / h * inv_n
                    if kw > 0.0:
                        nz += 1
                        yj = y_sorted[j]
                        for r in range(q):
                            v[r] = z_sorted[j, r]
                            v[q + r] = t * z_sorted[j, r]
                        for r in range(d):
                            rhs[r] += kw * v[r] * yj
                            for c in range(r + 1):
                                S[r * d + c] += kw * v[r] * v[c]
                    j += 1
                count[p] = nz
                if nz == 0:
                    status[p] = 1
                    for r in range(q):
                        a[p, r] = NAN
                        b[p, r] = NAN
                    continue
                for r in range(d):
                    for c in range(r + 1, d):
                        S[r * d + c] = S[c * d + r]
                if _cholesky(S, L, d, pivot_tol):
                    ridged[p] = 1
                    lift = 0.0
                    for r in range(d):
                        lift += S[r * d + r]
                    lift = ridge_eps * lift / d
                    for r in range(d):
                        S[r * d + r] += lift
                    if _cholesky(S, L, d, pivot_tol):
                        status[p] = 2
                        for r in range(q):
                            a[p, r] = NAN
                            b[p, r] = NAN
                        continue
                _substitute(L, rhs, x, tmp, d)
                for r in range(q):
                    a[p, r] = x[r]
                    b[p, r] = x[q + r] / h
    finally:
        free(S); free(L); free(rhs); free(x); free(tmp); free(v)
    return a_arr, b_arr, ridged_arr, status_arr, count_arr
