# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element and node kernels.

Element kernels loop over elements and write only element-owned output
(forces, loads, viscous history). Node kernels gather those per-slot values
through the CSR adjacency in a fixed order, so results do not depend on the
thread count.
"""
from cython.parallel cimport prange
from libc.math cimport sqrt, cbrt
from libc.stdint cimport int64_t
import numpy as np

NAME = "cython"


cdef inline double det3(const double* A) noexcept nogil:
    return (A[0] * (A[4] * A[8] - A[5] * A[7])
            - A[1] * (A[3] * A[8] - A[5] * A[6])
            + A[2] * (A[3] * A[7] - A[4] * A[6]))


cdef inline double inv3(const double* A, double* out) noexcept nogil:
    cdef double d = det3(A)
    cdef double r = 1.0 / d
    out[0] = (A[4] * A[8] - A[5] * A[7]) * r
    out[1] = (A[2] * A[7] - A[1] * A[8]) * r
    out[2] = (A[1] * A[5] - A[2] * A[4]) * r
    out[3] = (A[5] * A[6] - A[3] * A[8]) * r
    out[4] = (A[0] * A[8] - A[2] * A[6]) * r
    out[5] = (A[2] * A[3] - A[0] * A[5]) * r
    out[6] = (A[3] * A[7] - A[4] * A[6]) * r
    out[7] = (A[1] * A[6] - A[0] * A[7]) * r
    out[8] = (A[0] * A[4] - A[1] * A[3]) * r
    return d


cdef inline void mm(const double* A, const double* B, double* C) noexcept nogil:
    # C = A B
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]


cdef inline void mtm(const double* A, const double* B, double* C) noexcept nogil:
    # C = A^T B
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[i] * B[j] + A[3 + i] * B[3 + j] + A[6 + i] * B[6 + j]


cdef inline void mmt(const double* A, const double* B, double* C) noexcept nogil:
    # C = A B^T
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[3 * i] * B[3 * j] + A[3 * i + 1] * B[3 * j + 1] + A[3 * i + 2] * B[3 * j + 2]


def deformation_gradients(const int64_t[:, ::1] conn, const double[:, :, ::1] grad,
                          const double[:, ::1] disp, int workers=1):
    cdef Py_ssize_t E = conn.shape[0], n = conn.shape[1]
    out = np.empty((E, 3, 3))
    cdef double[:, :, ::1] F = out
    cdef Py_ssize_t e, a, i, j
    cdef int64_t node
    cdef double s
    for e in prange(E, nogil=True, num_threads=workers, schedule="static"):
        for i in range(3):
            for j in range(3):
                s = 0.0
                for a in range(n):
                    s = s + disp[conn[e, a], i] * grad[e, j, a]
                F[e, i, j] = s + (1.0 if i == j else 0.0)
    return out


cdef void _thermal_one(Py_ssize_t n, const int64_t* conn, const double* grad, double vol,
                       const double* F, const double* D, const double* T,
                       double* out) noexcept nogil:
    cdef double Finv[9]
    cdef double g0[3]
    cdef double gT[3]
    cdef double q[3]
    cdef double w[3]
    cdef double J = inv3(F, Finv)
    cdef Py_ssize_t a, k, j
    cdef double s
    # reference temperature gradient, then push forward with F^-T
    for k in range(3):
        s = 0.0
        for a in range(n):
            s = s + grad[k * n + a] * T[conn[a]]
        g0[k] = s
    for j in range(3):
        gT[j] = g0[0] * Finv[j] + g0[1] * Finv[3 + j] + g0[2] * Finv[6 + j]
    for j in range(3):
        q[j] = D[3 * j] * gT[0] + D[3 * j + 1] * gT[1] + D[3 * j + 2] * gT[2]
    for k in range(3):
        w[k] = Finv[3 * k] * q[0] + Finv[3 * k + 1] * q[1] + Finv[3 * k + 2] * q[2]
    s = vol * J
    for a in range(n):
        out[a] = s * (grad[a] * w[0] + grad[n + a] * w[1] + grad[2 * n + a] * w[2])


def thermal_element_loads(const int64_t[:, ::1] conn, const double[:, :, ::1] grad,
                          const double[::1] vol, const double[:, :, ::1] F,
                          const double[:, :, ::1] D, const double[::1] T, int workers=1):
    cdef Py_ssize_t E = conn.shape[0], n = conn.shape[1]
    out = np.empty((E, n))
    cdef double[:, ::1] f = out
    cdef Py_ssize_t e
    for e in prange(E, nogil=True, num_threads=workers, schedule="static"):
        _thermal_one(n, &conn[e, 0], &grad[e, 0, 0], vol[e], &F[e, 0, 0], &D[e, 0, 0],
                     &T[0], &f[e, 0])
    return out


cdef void _pk2(const double* Fe, double mu, double kappa, double eta, const double* a,
               double* S) noexcept nogil:
    cdef double C[9]
    cdef double Ci[9]
    cdef double detC, J, scale, trC, I4, coef, c1, c2
    cdef int i, j
    mtm(Fe, Fe, C)
    detC = inv3(C, Ci)
    J = sqrt(detC)
    scale = 1.0 / cbrt(detC)  # J^(-2/3)
    trC = C[0] + C[4] + C[8]
    c1 = mu * scale
    c2 = kappa * (J - 1.0) * J - c1 * trC / 3.0
    for i in range(9):
        S[i] = c2 * Ci[i]
    S[0] += c1
    S[4] += c1
    S[8] += c1
    if eta > 0.0:
        I4 = 0.0
        for i in range(3):
            for j in range(3):
                I4 = I4 + a[i] * C[3 * i + j] * a[j]
        coef = 2.0 * eta * (scale * I4 - 1.0) * scale
        for i in range(3):
            for j in range(3):
                S[3 * i + j] += coef * (a[i] * a[j] - I4 / 3.0 * Ci[3 * i + j])


cdef void _force_one(Py_ssize_t n, Py_ssize_t P, const int64_t* conn, const double* grad,
                     double vol, const double* F, const double* Fth, const double* fiber,
                     double mu, double kappa, double eta, const double* pa, const double* pb,
                     double* hist, const double* hg, double hgk, const double* disp,
                     double* out) noexcept nogil:
    cdef double Fe[9]
    cdef double Ti[9]
    cdef double S[9]
    cdef double tmp[9]
    cdef double Pk[9]
    cdef double visc[9]
    cdef double proj[3]
    cdef double dth, s, h
    cdef Py_ssize_t i, j, a, p, k
    if Fth != NULL:
        dth = inv3(Fth, Ti)
        mm(F, Ti, Fe)
        _pk2(Fe, mu, kappa, eta, fiber, tmp)
        mm(Ti, tmp, Pk)
        mmt(Pk, Ti, S)
        for i in range(9):
            S[i] = S[i] * dth
    else:
        _pk2(F, mu, kappa, eta, fiber, S)
    # enforce exact symmetry
    for i in range(3):
        for j in range(i + 1, 3):
            s = 0.5 * (S[3 * i + j] + S[3 * j + i])
            S[3 * i + j] = s
            S[3 * j + i] = s
    if P > 0:
        for i in range(9):
            visc[i] = 0.0
        for p in range(P):
            for i in range(9):
                h = pa[p] * S[i] + pb[p] * hist[9 * p + i]
                hist[9 * p + i] = h
                visc[i] = visc[i] + h
        for i in range(9):
            S[i] = S[i] - visc[i]
    mm(F, S, Pk)
    for a in range(n):
        for i in range(3):
            out[3 * a + i] = vol * (Pk[3 * i] * grad[a] + Pk[3 * i + 1] * grad[n + a]
                                    + Pk[3 * i + 2] * grad[2 * n + a])
    if hg != NULL:
        for k in range(4):
            for i in range(3):
                s = 0.0
                for a in range(n):
                    s = s + hg[k * n + a] * disp[3 * conn[a] + i]
                proj[i] = s
            for a in range(n):
                for i in range(3):
                    out[3 * a + i] += hgk * hg[k * n + a] * proj[i]


def element_forces(const int64_t[:, ::1] conn, const double[:, :, ::1] grad,
                   const double[::1] vol, const double[:, :, ::1] F, Fth, fibers,
                   double mu, double kappa, double eta, pa, pb,
                   double[:, :, :, ::1] hist, hg, hg_k, const double[:, ::1] disp,
                   int workers=1):
    """Internal nodal forces ``(E, n, 3)``; updates ``hist`` in place."""
    cdef Py_ssize_t E = conn.shape[0], n = conn.shape[1], P = hist.shape[1]
    out = np.empty((E, n, 3))
    cdef double[:, :, ::1] f = out
    cdef const double[:, :, ::1] fth_v
    cdef const double[:, ::1] fib_v
    cdef const double[:, :, ::1] hg_v
    cdef const double[::1] hgk_v
    cdef const double[::1] pa_v = np.ascontiguousarray(pa, dtype=float)
    cdef const double[::1] pb_v = np.ascontiguousarray(pb, dtype=float)
    cdef bint has_fth = Fth is not None
    cdef bint has_fib = fibers is not None and eta > 0.0
    cdef bint has_hg = hg is not None
    cdef double zero3[3]
    zero3[0] = 0.0
    zero3[1] = 0.0
    zero3[2] = 0.0
    if has_fth:
        fth_v = Fth
    if has_fib:
        fib_v = fibers
    if has_hg:
        hg_v = hg
        hgk_v = hg_k
    cdef Py_ssize_t e
    cdef const double* fth_p
    cdef const double* fib_p
    cdef const double* hg_p
    cdef double hgk
    cdef const double* pa_p = &pa_v[0] if P > 0 else NULL
    cdef const double* pb_p = &pb_v[0] if P > 0 else NULL
    cdef double* hist_p
    for e in prange(E, nogil=True, num_threads=workers, schedule="static"):
        fth_p = &fth_v[e, 0, 0] if has_fth else NULL
        fib_p = &fib_v[e, 0] if has_fib else &zero3[0]
        hg_p = &hg_v[e, 0, 0] if has_hg else NULL
        hgk = hgk_v[e] if has_hg else 0.0
        hist_p = &hist[e, 0, 0, 0] if P > 0 else NULL
        _force_one(n, P, &conn[e, 0], &grad[e, 0, 0], vol[e], &F[e, 0, 0], fth_p, fib_p,
                   mu, kappa, eta, pa_p, pb_p, hist_p, hg_p, hgk, &disp[0, 0], &f[e, 0, 0])
    return out


def gather(const int64_t[::1] ptr, const int64_t[::1] slot, values, Py_ssize_t n_nodes, int workers=1):
    """Sum per-slot element values into nodes in adjacency order."""
    arr = np.ascontiguousarray(values, dtype=float)
    cdef Py_ssize_t m = 1 if arr.ndim == 1 else arr.shape[1]
    cdef const double[:, ::1] v = arr.reshape(-1, m)
    out = np.empty((n_nodes, m))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t node, k, c
    cdef double s
    for node in prange(n_nodes, nogil=True, num_threads=workers, schedule="static"):
        for c in range(m):
            s = 0.0
            for k in range(ptr[node], ptr[node + 1]):
                s = s + v[slot[k], c]
            o[node, c] = s
    return out[:, 0] if arr.ndim == 1 else out
