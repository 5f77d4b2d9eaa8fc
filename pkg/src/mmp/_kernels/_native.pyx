# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched least-squares kernel (Householder QR via LAPACK).

Hot inner loop of every solver: fit y onto a batch of column subsets of
the sensing matrix.  Mirrors mmp._kernels.pyfallback.batch_lstsq; keep
the two implementations behaviourally identical.
"""

import numpy as np

from libc.stdint cimport int64_t
from scipy.linalg.cython_blas cimport daxpy, dcopy, ddot
from scipy.linalg.cython_lapack cimport dgeqrf, dgesvd, dormqr, dtrtrs


def batch_lstsq(phi, supports, y, double rank_tol, double diag_prefilter):
    """See mmp._kernels.pyfallback.batch_lstsq for the contract."""
    phi = np.asfortranarray(phi, dtype=np.float64)
    supports = np.ascontiguousarray(supports, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.float64)

    cdef double[::1, :] phi_v = phi
    cdef int64_t[:, ::1] sup_v = supports
    cdef double[::1] y_v = y
    cdef int m = phi_v.shape[0]
    cdef int n = phi_v.shape[1]
    cdef int B = sup_v.shape[0]
    cdef int k = sup_v.shape[1]
    if k < 1:
        raise ValueError("supports must have at least one column")
    if k > m:
        raise ValueError("support size exceeds row count")
    if y_v.shape[0] != m:
        raise ValueError("y length does not match matrix rows")
    if B and (np.min(supports) < 0 or np.max(supports) >= n):
        raise ValueError("column index out of range")

    coef_arr = np.full((B, k), np.nan)
    resid_arr = np.full((B, m), np.nan)
    rss_arr = np.full(B, np.inf)
    ok_arr = np.zeros(B, dtype=np.uint8)
    if B == 0:
        return coef_arr, resid_arr, rss_arr, ok_arr.astype(bool)

    cdef double[:, ::1] coef_v = coef_arr
    cdef double[:, ::1] resid_v = resid_arr
    cdef double[::1] rss_v = rss_arr
    cdef unsigned char[::1] ok_v = ok_arr

    # Workspace queries (same shapes for every batch element).
    cdef int info = 0, lwork = -1, one = 1
    cdef double wq_geqrf = 0, wq_ormqr = 0, wq_gesvd = 0, dummy = 0
    a_arr = np.empty(m * k)
    tau_arr = np.empty(k)
    r_arr = np.empty(k * k)
    sv_arr = np.empty(k)
    qty_arr = np.empty(m)
    cdef double[::1] a = a_arr
    cdef double[::1] tau = tau_arr
    cdef double[::1] rbuf = r_arr
    cdef double[::1] sv = sv_arr
    cdef double[::1] qty = qty_arr
    dgeqrf(&m, &k, &a[0], &m, &tau[0], &wq_geqrf, &lwork, &info)
    dormqr("L", "T", &m, &one, &k, &a[0], &m, &tau[0], &qty[0], &m,
           &wq_ormqr, &lwork, &info)
    dgesvd("N", "N", &k, &k, &rbuf[0], &k, &sv[0], &dummy, &one,
           &dummy, &one, &wq_gesvd, &lwork, &info)
    lwork = <int>max(wq_geqrf, wq_ormqr, wq_gesvd)
    work_arr = np.empty(lwork)
    cdef double[::1] work = work_arr

    cdef int b, i, j, col
    cdef double dmin, dmax, d, neg
    cdef bint deficient
    with nogil:
        for b in range(B):
            # Gather columns into the Fortran-order work matrix.
            for j in range(k):
                col = <int>sup_v[b, j]
                dcopy(&m, &phi_v[0, col], &one, &a[j * m], &one)
            dgeqrf(&m, &k, &a[0], &m, &tau[0], &work[0], &lwork, &info)
            if info != 0:
                continue
            dmax = 0.0
            dmin = -1.0
            for i in range(k):
                d = a[i + i * m]
                if d < 0:
                    d = -d
                if d > dmax:
                    dmax = d
                if dmin < 0 or d < dmin:
                    dmin = d
            deficient = False
            if dmin <= diag_prefilter * dmax:
                # Suspect factor: decide on the exact singular values of R.
                for j in range(k):
                    for i in range(k):
                        rbuf[i + j * k] = a[i + j * m] if i <= j else 0.0
                dgesvd("N", "N", &k, &k, &rbuf[0], &k, &sv[0], &dummy,
                       &one, &dummy, &one, &work[0], &lwork, &info)
                if info != 0 or sv[0] <= 0 or sv[k - 1] <= rank_tol * sv[0]:
                    deficient = True
            if deficient:
                continue
            dcopy(&m, &y_v[0], &one, &qty[0], &one)
            dormqr("L", "T", &m, &one, &k, &a[0], &m, &tau[0], &qty[0],
                   &m, &work[0], &lwork, &info)
            dtrtrs("U", "N", "N", &k, &one, &a[0], &m, &qty[0], &m, &info)
            if info != 0:
                continue
            for j in range(k):
                coef_v[b, j] = qty[j]
            # Residual against the original columns (not the QR factors).
            dcopy(&m, &y_v[0], &one, &resid_v[b, 0], &one)
            for j in range(k):
                col = <int>sup_v[b, j]
                neg = -qty[j]
                daxpy(&m, &neg, &phi_v[0, col], &one, &resid_v[b, 0], &one)
            rss_v[b] = ddot(&m, &resid_v[b, 0], &one, &resid_v[b, 0], &one)
            ok_v[b] = 1

    return coef_arr, resid_arr, rss_arr, ok_arr.astype(bool)
