"""Pure-numpy implementation of the batched least-squares kernel.

Selected by :mod:`mmp._kernels` when the compiled extension is not
available (or when forced via ``MMP_BACKEND=python``).  Semantics must
match ``_native.pyx`` exactly: Householder QR, two-stage rank test
(diagonal prefilter, then exact singular values of R), residual
recomputed against the original columns.
"""

import numpy as np


def batch_lstsq(phi, supports, y, rank_tol, diag_prefilter):
    """Least-squares fit of y onto each column subset listed in `supports`.

    Parameters
    ----------
    phi : (m, n) float64 array
    supports : (B, k) int64 array of 0-based column indices, k >= 1
    y : (m,) float64 array
    rank_tol : float
        A subset is flagged rank-deficient when the smallest singular
        value of its column submatrix falls below ``rank_tol`` times the
        largest.
    diag_prefilter : float
        Exact singular values are only computed when
        ``min|R_ii| <= diag_prefilter * max|R_ii|``; above that margin
        the factor is accepted as full rank.

    Returns
    -------
    coef : (B, k) coefficients (NaN on rank-deficient rows)
    resid : (B, m) residuals y - phi[:, s] @ coef (NaN on bad rows)
    rss : (B,) squared residual norms (+inf on bad rows)
    ok : (B,) bool, False where rank-deficient
    """
    m = phi.shape[0]
    B, k = supports.shape
    coef = np.full((B, k), np.nan)
    resid = np.full((B, m), np.nan)
    rss = np.full(B, np.inf)
    ok = np.zeros(B, dtype=bool)
    if B == 0:
        return coef, resid, rss, ok

    cols = np.ascontiguousarray(
        phi[:, supports.reshape(-1)].reshape(m, B, k).transpose(1, 0, 2)
    )
    q, r = np.linalg.qr(cols)
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    dmax = diag.max(axis=1)
    dmin = diag.min(axis=1)
    ok[:] = True
    suspect = dmin <= diag_prefilter * dmax
    if suspect.any():
        sv = np.linalg.svd(r[suspect], compute_uv=False)
        ok[suspect] = sv[:, -1] > rank_tol * sv[:, 0]
    if ok.any():
        qty = q[ok].transpose(0, 2, 1) @ y
        sol = np.linalg.solve(r[ok], qty[:, :, None])[:, :, 0]
        coef[ok] = sol
        res = y[None, :] - (cols[ok] @ sol[:, :, None])[:, :, 0]
        resid[ok] = res
        rss[ok] = np.einsum("bm,bm->b", res, res)
    return coef, resid, rss, ok
