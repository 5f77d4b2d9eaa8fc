"""Multipath matching pursuit: greedy tree-search sparse recovery.

Breadth-first search with candidate merging (`mmp_bf`), the serialized
depth-first variant with the layer-order bijection (`mmp_df`), plain OMP
and the known-support least-squares baseline, together with exact
restricted-isometry analysis of the recovery guarantees and a Monte
Carlo benchmark harness.

Column indices are 1-based in all public interfaces.
"""

from ._kernels import backend_name
from .core import (
    CandidateSet,
    Measurement,
    MmpError,
    Path,
    RankDeficientError,
    SensingMatrix,
    SparseSignal,
    correlate,
    extend_path,
    least_squares_project,
    load_matrix,
    load_vector,
    make_path,
    save_matrix,
    save_vector,
    top_l_indices,
)
from .solvers import (
    PartialRecoveryError,
    RecoveryOutput,
    SearchStats,
    SolverConfig,
    candidate_order,
    compute_ck,
    mmp_bf,
    mmp_bf_trace,
    mmp_df,
    omp,
    oracle_ls,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "Measurement",
    "MmpError",
    "Path",
    "PartialRecoveryError",
    "RankDeficientError",
    "RecoveryOutput",
    "SearchStats",
    "SensingMatrix",
    "SolverConfig",
    "SparseSignal",
    "backend_name",
    "candidate_order",
    "compute_ck",
    "correlate",
    "extend_path",
    "least_squares_project",
    "load_matrix",
    "load_vector",
    "make_path",
    "mmp_bf",
    "mmp_bf_trace",
    "mmp_df",
    "omp",
    "oracle_ls",
    "save_matrix",
    "save_vector",
    "top_l_indices",
    "__version__",
]
