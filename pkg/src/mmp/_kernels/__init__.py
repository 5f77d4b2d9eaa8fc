"""Backend selection for the batched least-squares kernel.

The compiled extension (``mmp._kernels._native``) is preferred; the
pure-numpy fallback is used when it is missing.  Set ``MMP_BACKEND`` to
``native`` or ``python`` to force one (forcing an unavailable backend
raises at import time).
"""

import os

from . import pyfallback

# Rank test: a support is rejected when smin(phi_S) <= RANK_TOL * smax(phi_S).
# Exact singular values are only computed when the R diagonal of the QR
# factor looks suspect (ratio below DIAG_PREFILTER); a graded triangular
# profile that hides deficiency from the diagonal would be missed, which
# does not occur for the dense ensembles this library targets.
RANK_TOL = 1e-12
DIAG_PREFILTER = 1e-6

_requested = os.environ.get("MMP_BACKEND", "").strip().lower()
if _requested not in ("", "native", "python"):
    raise ImportError(f"MMP_BACKEND must be 'native' or 'python', got {_requested!r}")

if _requested == "python":
    _impl = pyfallback
    BACKEND = "python"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        _impl = pyfallback
        BACKEND = "python"


def batch_lstsq(phi, supports, y):
    """Batched least-squares fit using the selected backend.

    See :func:`mmp._kernels.pyfallback.batch_lstsq` for the contract.
    """
    return _impl.batch_lstsq(phi, supports, y, RANK_TOL, DIAG_PREFILTER)


def backend_name():
    return BACKEND
