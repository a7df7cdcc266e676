# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU recurrence kernels.

Same contract as ``_gru_numpy``: time-major arrays, gate order
(reset, update, candidate), input projections precomputed by the caller.
Matrix products go through the BLAS that scipy links against; the gate
math lives in ``_gru_gates.h``.
"""
import numpy as np
from cython cimport floating
from scipy.linalg.cython_blas cimport sgemm, dgemm


cdef extern from "_gru_gates.h" nogil:
    void gates_fwd_f(Py_ssize_t B, Py_ssize_t H, const float *gx, const float *gh,
                     const float *hprev, const float *mask, float *r, float *z,
                     float *n, float *ghn, float *h)
    void gates_fwd_d(Py_ssize_t B, Py_ssize_t H, const double *gx, const double *gh,
                     const double *hprev, const double *mask, double *r, double *z,
                     double *n, double *ghn, double *h)
    void gates_bwd_f(Py_ssize_t B, Py_ssize_t H, const float *dh, const float *dhs,
                     const float *hprev, const float *mask, const float *r,
                     const float *z, const float *n, const float *ghn, float *dgx,
                     float *dgh, float *dnext)
    void gates_bwd_d(Py_ssize_t B, Py_ssize_t H, const double *dh, const double *dhs,
                     const double *hprev, const double *mask, const double *r,
                     const double *z, const double *n, const double *ghn, double *dgx,
                     double *dgh, double *dnext)


cdef inline void _gemm(char ta, char tb, int m, int n, int k, floating *a, int lda,
                       floating *b, int ldb, floating beta, floating *c, int ldc) noexcept nogil:
    # column-major BLAS; row-major callers swap operands
    cdef floating alpha = 1
    if floating is float:
        sgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def gru_forward(floating[:, :, ::1] gx, floating[:, ::1] wh, floating[::1] bh,
                floating[:, ::1] h0, floating[:, ::1] mask):
    cdef Py_ssize_t T = gx.shape[0], B = gx.shape[1], H3 = gx.shape[2]
    cdef Py_ssize_t H = H3 // 3
    cdef Py_ssize_t t, b
    dtype = np.float32 if floating is float else np.float64
    hs_a = np.empty((T, B, H), dtype)
    r_a = np.empty((T, B, H), dtype)
    z_a = np.empty((T, B, H), dtype)
    n_a = np.empty((T, B, H), dtype)
    ghn_a = np.empty((T, B, H), dtype)
    gh_a = np.empty((B, H3), dtype)
    cdef floating[:, :, ::1] hs = hs_a
    cdef floating[:, :, ::1] r = r_a
    cdef floating[:, :, ::1] z = z_a
    cdef floating[:, :, ::1] n = n_a
    cdef floating[:, :, ::1] ghn = ghn_a
    cdef floating[:, ::1] gh = gh_a
    cdef floating *hprev
    with nogil:
        for t in range(T):
            for b in range(B):
                gh[b, :] = bh
            hprev = &h0[0, 0] if t == 0 else &hs[t - 1, 0, 0]
            # gh(B,3H) += hprev(B,H) @ wh(H,3H)
            _gemm(c'N', c'N', <int>H3, <int>B, <int>H, &wh[0, 0], <int>H3,
                  hprev, <int>H, <floating>1, &gh[0, 0], <int>H3)
            if floating is float:
                gates_fwd_f(B, H, &gx[t, 0, 0], &gh[0, 0], hprev, &mask[t, 0],
                            &r[t, 0, 0], &z[t, 0, 0], &n[t, 0, 0], &ghn[t, 0, 0], &hs[t, 0, 0])
            else:
                gates_fwd_d(B, H, &gx[t, 0, 0], &gh[0, 0], hprev, &mask[t, 0],
                            &r[t, 0, 0], &z[t, 0, 0], &n[t, 0, 0], &ghn[t, 0, 0], &hs[t, 0, 0])
    return hs_a, (r_a, z_a, n_a, ghn_a)


def gru_backward(floating[:, :, ::1] dhs, floating[:, ::1] wh, floating[:, ::1] h0,
                 floating[:, ::1] mask, floating[:, :, ::1] hs, cache):
    cdef floating[:, :, ::1] r = cache[0]
    cdef floating[:, :, ::1] z = cache[1]
    cdef floating[:, :, ::1] n = cache[2]
    cdef floating[:, :, ::1] ghn = cache[3]
    cdef Py_ssize_t T = hs.shape[0], B = hs.shape[1], H = hs.shape[2]
    cdef Py_ssize_t H3 = 3 * H
    cdef Py_ssize_t t, b, j
    dtype = np.float32 if floating is float else np.float64
    dgx_a = np.empty((T, B, H3), dtype)
    dwh_a = np.zeros((H, H3), dtype)
    dbh_a = np.zeros(H3, dtype)
    dh_a = np.zeros((B, H), dtype)
    dnext_a = np.empty((B, H), dtype)
    dgh_a = np.empty((B, H3), dtype)
    cdef floating[:, :, ::1] dgx = dgx_a
    cdef floating[:, ::1] dwh = dwh_a
    cdef floating[::1] dbh = dbh_a
    cdef floating[:, ::1] dh = dh_a
    cdef floating[:, ::1] dnext = dnext_a
    cdef floating[:, ::1] dgh = dgh_a
    cdef floating *hprev
    with nogil:
        for t in range(T - 1, -1, -1):
            hprev = &h0[0, 0] if t == 0 else &hs[t - 1, 0, 0]
            if floating is float:
                gates_bwd_f(B, H, &dh[0, 0], &dhs[t, 0, 0], hprev, &mask[t, 0],
                            &r[t, 0, 0], &z[t, 0, 0], &n[t, 0, 0], &ghn[t, 0, 0],
                            &dgx[t, 0, 0], &dgh[0, 0], &dnext[0, 0])
            else:
                gates_bwd_d(B, H, &dh[0, 0], &dhs[t, 0, 0], hprev, &mask[t, 0],
                            &r[t, 0, 0], &z[t, 0, 0], &n[t, 0, 0], &ghn[t, 0, 0],
                            &dgx[t, 0, 0], &dgh[0, 0], &dnext[0, 0])
            for b in range(B):
                for j in range(H3):
                    dbh[j] += dgh[b, j]
            # dwh(H,3H) += hprev(B,H)^T @ dgh(B,3H)
            _gemm(c'N', c'T', <int>H3, <int>H, <int>B, &dgh[0, 0], <int>H3,
                  hprev, <int>H, <floating>1, &dwh[0, 0], <int>H3)
            # dnext(B,H) += dgh(B,3H) @ wh(H,3H)^T
            _gemm(c'T', c'N', <int>H, <int>B, <int>H3, &wh[0, 0], <int>H3,
                  &dgh[0, 0], <int>H3, <floating>1, &dnext[0, 0], <int>H)
            dh[:, :] = dnext
    return dgx_a, dwh_a, dbh_a, dh_a
