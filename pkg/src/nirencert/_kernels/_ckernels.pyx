# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; mirror of ``_pykernels`` operation for operation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef int MAX_SWEEPS = 100


cdef void _jacobi(double* a, int m) noexcept nogil:
    cdef int sweep, p, q, r, i, j
    cdef double off, scale, apq, theta, t, c, s, tau, h, g, hh
    for sweep in range(MAX_SWEEPS):
        off = 0.0
        scale = 0.0
        for i in range(m):
            scale += a[i * m + i] * a[i * m + i]
            for j in range(i + 1, m):
                off += a[i * m + j] * a[i * m + j]
        scale += 2.0 * off
        if off <= 1e-32 * scale or off == 0.0:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p * m + q]
                if apq == 0.0:
                    continue
                theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                h = t * apq
                a[p * m + p] -= h
                a[q * m + q] += h
                a[p * m + q] = 0.0
                a[q * m + p] = 0.0
                for r in range(m):
                    if r == p or r == q:
                        continue
                    g = a[r * m + p]
                    hh = a[r * m + q]
                    a[r * m + p] = g - s * (hh + g * tau)
                    a[p * m + r] = a[r * m + p]
                    a[r * m + q] = hh + s * (g - hh * tau)
                    a[q * m + r] = a[r * m + q]


cdef double _min_diag(double* a, int m) noexcept nogil:
    cdef double best = a[0]
    cdef int i
    for i in range(1, m):
        if a[i * m + i] < best:
            best = a[i * m + i]
    return best


def symmetric_eigenvalues(mat):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.array(mat, dtype=np.float64, order="C")
    cdef int m = a.shape[0]
    _jacobi(<double*> a.data, m)
    return np.sort(np.diag(a).copy())


def least_eigenvalue(mat):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.array(mat, dtype=np.float64, order="C")
    cdef int m = a.shape[0]
    if m == 1:
        return float(a[0, 0])
    _jacobi(<double*> a.data, m)
    return _min_diag(<double*> a.data, m)


def subset_spectra(full, masks):
    cdef double[:, ::1] f = np.ascontiguousarray(full, dtype=np.float64)
    cdef long long[::1] mk = np.ascontiguousarray(masks, dtype=np.int64)
    cdef int m = f.shape[0]
    cdef Py_ssize_t k, nmask = mk.shape[0]
    rho_a = np.empty(nmask)
    rad_a = np.empty(nmask)
    cdef double[::1] rho = rho_a
    cdef double[::1] rad = rad_a
    cdef double* work = <double*> malloc(m * m * sizeof(double))
    cdef int* idx = <int*> malloc(m * sizeof(int))
    cdef int cnt, i, j
    cdef long long mask
    cdef double lo, hi, v
    try:
        with nogil:
            for k in range(nmask):
                mask = mk[k]
                cnt = 0
                for i in range(m):
                    if (mask >> i) & 1:
                        idx[cnt] = i
                        cnt += 1
                for i in range(cnt):
                    for j in range(cnt):
                        work[i * cnt + j] = f[idx[i], idx[j]]
                if cnt > 1:
                    _jacobi(work, cnt)
                lo = work[0]
                hi = fabs(work[0])
                for i in range(1, cnt):
                    v = work[i * cnt + i]
                    if v < lo:
                        lo = v
                    if fabs(v) > hi:
                        hi = fabs(v)
                rho[k] = lo
                rad[k] = hi
    finally:
        free(work)
        free(idx)
    return rho_a, rad_a


def pair_interactions(lambdas, points, int n, double sigma):
    cdef double[::1] lam = np.ascontiguousarray(lambdas, dtype=np.float64)
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef int p = lam.shape[0]
    cdef int dim = pts.shape[1]
    cdef double expo = (2.0 * sigma - n) / 2.0
    eps_a = np.zeros((p, p))
    lam_a = np.zeros((p, p))
    da_a = np.zeros((p, p, dim))
    cdef double[:, ::1] eps = eps_a
    cdef double[:, ::1] lde = lam_a
    cdef double[:, :, ::1] da = da_a
    cdef int i, j, k
    cdef double li, lj, d2, t, e, common, f, dk
    with nogil:
        for i in range(p):
            for j in range(i + 1, p):
                li = lam[i]
                lj = lam[j]
                d2 = 0.0
                for k in range(dim):
                    dk = pts[i, k] - pts[j, k]
                    d2 += dk * dk
                t = li / lj + lj / li + li * lj * d2
                e = pow(t, expo)
                eps[i, j] = e
                eps[j, i] = e
                common = li * lj * d2
                lde[i, j] = expo * e / t * (li / lj - lj / li + common)
                lde[j, i] = expo * e / t * (lj / li - li / lj + common)
                f = expo * e / t * 2.0 * li * lj
                for k in range(dim):
                    dk = pts[i, k] - pts[j, k]
                    da[i, j, k] = f * dk
                    da[j, i, k] = -f * dk
    return eps_a, lam_a, da_a
