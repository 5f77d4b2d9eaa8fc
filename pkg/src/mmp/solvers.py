"""Sparse-recovery solvers: breadth-first and depth-first multipath
matching pursuit, plain OMP, and the known-support least-squares baseline.

All solvers share the same pattern: grow candidate supports by picking
columns that correlate strongly with the current residual, refit by least
squares after every extension, and return the depth-K candidate with the
smallest residual.  The breadth-first variant keeps many candidates alive
per iteration and merges duplicates; the depth-first variant serializes
the search through the layer-order bijection (`compute_ck`) under a
candidate budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import (
    CandidateSet,
    MmpError,
    Path,
    RankDeficientError,
    SensingMatrix,
    _top_l_zero_based,
    least_squares_project,
)

TERMINATED_BUDGET = "budget"
TERMINATED_EPSILON = "epsilon"
TERMINATED_COMPLETE = "complete"


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver parameters.

    K: target sparsity.  L: expansion factor (children per candidate).
    max_candidates_per_iter: breadth-first pruning cap (None = unlimited).
    N_max: depth-first candidate budget.  epsilon: depth-first stop
    threshold on the squared residual norm; None selects the relative
    default ``1e-12 * ||y||^2``.
    """

    K: int
    L: int = 1
    max_candidates_per_iter: int | None = None
    N_max: int = 1
    epsilon: float | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.L < 1:
            raise ValueError("L must be positive")
        if self.max_candidates_per_iter is not None and self.max_candidates_per_iter < 1:
            raise ValueError("max_candidates_per_iter must be positive")
        if self.N_max < 1:
            raise ValueError("N_max must be positive")
        if self.epsilon is not None and not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass(frozen=True)
class SearchStats:
    """Search effort counters.

    candidates_per_iteration holds the surviving candidate count after
    each breadth-first iteration (empty for the serialized searches);
    paths_explored is the total number of candidates evaluated.
    """

    candidates_per_iteration: tuple
    paths_explored: int
    terminated_by: str


@dataclass(frozen=True, eq=False)
class RecoveryOutput:
    """Final support estimate (1-based, ascending) with its LS fit."""

    support: tuple
    coefficients: np.ndarray
    residual_norm_sq: float
    stats: SearchStats

    def dense(self, n: int) -> np.ndarray:
        """Embed the estimate into a length-n vector (zeros off support)."""
        x = np.zeros(n)
        for i, c in zip(self.support, self.coefficients):
            x[i - 1] = c
        return x


class PartialRecoveryError(MmpError):
    """Every surviving path went rank deficient before reaching depth K.

    Carries the best partial result found (support smaller than K).
    """

    def __init__(self, partial: RecoveryOutput):
        self.partial = partial
        super().__init__(
            f"search exhausted at depth {len(partial.support)}; best partial "
            f"support {partial.support}"
        )


def compute_ck(ell: int, L: int, K: int) -> tuple:
    """Layer orders (c_1, ..., c_K) of the ell-th serialized candidate.

    The unique base-L digit expansion of ell-1, shifted to {1, ..., L}:
    c_k = ((ell-1) div L^(k-1)) mod L, plus 1.
    """
    if L < 1 or K < 1:
        raise ValueError("L and K must be positive")
    if not 1 <= ell <= L**K:
        raise ValueError(f"candidate order {ell} outside 1..L^K = {L**K}")
    temp = ell - 1
    layers = []
    for _ in range(K):
        layers.append(temp % L + 1)
        temp //= L
    return tuple(layers)


def candidate_order(layers, L: int) -> int:
    """Inverse of :func:`compute_ck`: ell = 1 + sum (c_k - 1) L^(k-1)."""
    if L < 1:
        raise ValueError("L must be positive")
    ell = 1
    weight = 1
    for c in layers:
        if not 1 <= c <= L:
            raise ValueError(f"layer order {c} outside 1..{L}")
        ell += (c - 1) * weight
        weight *= L
    return ell


def _check_dims(matrix: SensingMatrix, y, K: int, L: int):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (matrix.m,):
        raise ValueError(f"y length {y.shape} does not match m={matrix.m}")
    if K > matrix.m:
        raise MmpError(f"sparsity K={K} exceeds measurement count m={matrix.m}")
    if L > matrix.n:
        raise MmpError(f"expansion L={L} exceeds column count n={matrix.n}")
    return y


def _masked_corr(phi, residuals, paths):
    """|phi' r| for each path residual, with each path's own columns masked."""
    corr = np.abs(phi.T @ residuals.T)
    for i, sel in enumerate(paths):
        if sel:
            corr[list(sel), i] = -np.inf
    return corr


def _output(canonical0, coef, rss, stats):
    support = tuple(int(i) + 1 for i in canonical0)
    return RecoveryOutput(support, np.asarray(coef, dtype=np.float64), float(rss), stats)


def _insert_sorted(canonical, new):
    """Sorted tuple with `new` inserted (new is not already present)."""
    out = []
    placed = False
    for v in canonical:
        if not placed and new < v:
            out.append(new)
            placed = True
        out.append(v)
    if not placed:
        out.append(new)
    return tuple(out)


class _BfState:
    """One live breadth-first candidate (0-based internals)."""

    __slots__ = ("indices", "canonical", "coef", "resid", "rss")

    def __init__(self, indices, canonical, coef, resid, rss):
        self.indices = indices
        self.canonical = canonical
        self.coef = coef
        self.resid = resid
        self.rss = rss

    def to_path(self) -> Path:
        return Path(
            tuple(i + 1 for i in self.indices),
            tuple(i + 1 for i in self.canonical),
            self.coef,
            self.resid,
            self.rss,
        )


def _best_state(states):
    return min(states, key=lambda s: (s.rss, s.canonical))


def mmp_bf(matrix: SensingMatrix, y, config: SolverConfig) -> RecoveryOutput:
    """Breadth-first multipath matching pursuit.

    Runs K iterations.  Each surviving candidate spawns L children from
    its own top-L correlations (its own columns excluded); children that
    duplicate an already-spawned canonical support are merged.  When the
    per-iteration cap is exceeded, the candidates with smallest squared
    residual norm are kept (ties by lexicographic support).  Returns the
    depth-K candidate with minimal residual.
    """
    out, _ = _mmp_bf_impl(matrix, y, config, record=False)
    return out


def mmp_bf_trace(matrix: SensingMatrix, y, config: SolverConfig):
    """Like :func:`mmp_bf` but also returns every iteration's candidate set.

    The returned tuple of :class:`CandidateSet` starts with the root set
    (iteration 0, the empty path with residual y), so entry k holds the
    candidates that were expanded in iteration k+1.
    """
    return _mmp_bf_impl(matrix, y, config, record=True)


def _mmp_bf_impl(matrix, y, config, record):
    y = _check_dims(matrix, y, config.K, config.L)
    phi = matrix.entries
    K, L, cap = config.K, config.L, config.max_candidates_per_iter

    states = [_BfState((), (), np.empty(0), y.copy(), float(y @ y))]
    sets = [CandidateSet(0, (states[0].to_path(),))] if record else None
    counts = []

    for k in range(1, K + 1):
        if L > matrix.n - (k - 1):
            raise MmpError(
                f"iteration {k}: fewer than L={L} unused columns remain"
            )
        residuals = np.stack([s.resid for s in states])
        corr = _masked_corr(phi, residuals, [s.indices for s in states])
        order = np.argsort(-corr, axis=0, kind="stable")

        children = {}  # canonical (0-based tuple) -> (parent state, new index)
        for i, parent in enumerate(states):
            for new in order[:L, i]:
                new = int(new)
                canonical = _insert_sorted(parent.canonical, new)
                if canonical not in children:
                    children[canonical] = (parent, new)

        supports = np.array(list(children), dtype=np.int64)
        coef, resid, rss, ok = _kernels.batch_lstsq(phi, supports, y)

        next_states = []
        for b, (canonical, (parent, new)) in enumerate(children.items()):
            if not ok[b]:
                continue  # rank-deficient extension: discard this path
            next_states.append(
                _BfState(parent.indices + (new,), canonical, coef[b], resid[b], rss[b])
            )
        if not next_states:
            best = _best_state(states)
            stats = SearchStats(tuple(counts), sum(counts), TERMINATED_COMPLETE)
            raise PartialRecoveryError(
                _output(best.canonical, best.coef, best.rss, stats)
            )
        if cap is not None and len(next_states) > cap:
            next_states.sort(key=lambda s: (s.rss, s.canonical))
            next_states = next_states[:cap]
        states = next_states
        counts.append(len(states))
        if record:
            sets.append(CandidateSet(k, tuple(s.to_path() for s in states)))

    best = _best_state(states)
    stats = SearchStats(tuple(counts), sum(counts), TERMINATED_COMPLETE)
    out = _output(best.canonical, best.coef, best.rss, stats)
    return out, tuple(sets) if record else None


def omp(matrix: SensingMatrix, y, K: int) -> RecoveryOutput:
    """Orthogonal matching pursuit: K greedy single-index selections.

    In each iteration the unused column best correlated with the residual
    joins the support, followed by a full least-squares refit.
    """
    y = _check_dims(matrix, y, K, 1)
    phi = matrix.entries

    selected = []
    resid = y
    coef = np.empty(0)
    rss = float(y @ y)
    for k in range(K):
        corr = np.abs(phi.T @ resid)
        best = int(_top_l_zero_based(corr, 1, selected)[0])
        canonical = np.array(sorted(selected + [best]), dtype=np.int64)
        c, r, s, ok = _kernels.batch_lstsq(phi, canonical[None, :], y)
        if not ok[0]:
            stats = SearchStats((1,) * k, k, TERMINATED_COMPLETE)
            raise PartialRecoveryError(_output(sorted(selected), coef, rss, stats))
        selected.append(best)
        coef, resid, rss = c[0], r[0], float(s[0])

    stats = SearchStats((1,) * K, K, TERMINATED_COMPLETE)
    return _output(sorted(selected), coef, rss, stats)


def mmp_df(matrix: SensingMatrix, y, config: SolverConfig) -> RecoveryOutput:
    """Depth-first multipath matching pursuit with the layer-order bijection.

    Candidates are traced one at a time in the order ell = 1, 2, ...; the
    ell-th trace takes the c_k-th best unused column at layer k, where
    (c_1, ..., c_K) = compute_ck(ell, L, K).  The search stops when the
    best squared residual drops to `epsilon` or the budget N_max is
    exhausted; with N_max = 1 the single trace is exactly OMP's path.
    """
    y = _check_dims(matrix, y, config.K, config.L)
    phi = matrix.entries
    K, L = config.K, config.L
    if L > matrix.n - (K - 1):
        raise MmpError(f"fewer than L={L} unused columns at depth {K}")
    eps = config.epsilon
    if eps is None:
        eps = 1e-12 * float(y @ y)

    total = L**K
    budget = min(config.N_max, total)
    best = None  # (rss, canonical, coef)
    partial = ((), np.empty(0), float(y @ y))  # deepest prefix seen on failures
    explored = 0
    terminated = TERMINATED_BUDGET if budget < total else TERMINATED_COMPLETE

    for ell in range(1, budget + 1):
        layers = compute_ck(ell, L, K)
        selected = []
        resid = y
        coef = np.empty(0)
        rss = float(y @ y)
        failed = False
        for c in layers:
            corr = np.abs(phi.T @ resid)
            pick = int(_top_l_zero_based(corr, L, selected)[c - 1])
            canonical = np.array(sorted(selected + [pick]), dtype=np.int64)
            cf, r, s, ok = _kernels.batch_lstsq(phi, canonical[None, :], y)
            if not ok[0]:
                failed = True
                break
            selected.append(pick)
            coef, resid, rss = cf[0], r[0], float(s[0])
        explored += 1
        canonical = tuple(sorted(selected))
        if failed:
            if len(canonical) > len(partial[0]):
                partial = (canonical, coef, rss)
            continue
        if best is None or (rss, canonical) < (best[0], best[1]):
            best = (rss, canonical, coef)
        if best[0] <= eps:
            terminated = TERMINATED_EPSILON
            break

    stats = SearchStats((), explored, terminated)
    if best is None:
        raise PartialRecoveryError(_output(partial[0], partial[1], partial[2], stats))
    return _output(best[1], best[2], best[0], stats)


def oracle_ls(matrix: SensingMatrix, y, true_support) -> RecoveryOutput:
    """Least-squares fit on a known support (the estimator with prior
    knowledge of the nonzero locations)."""
    y = np.asarray(y, dtype=np.float64)
    coef, _, rss = least_squares_project(matrix, true_support, y)
    stats = SearchStats((), 1, TERMINATED_COMPLETE)
    return RecoveryOutput(tuple(sorted(int(i) for i in true_support)), coef, rss, stats)
