"""Dense linear-algebra primitives and the path/candidate data model.

Column indices are 1-based (the column universe is ``{1, ..., n}``) in
every public interface of this package: supports, paths, selections and
CLI output all use that convention.  0-based arrays appear only inside
the kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class MmpError(Exception):
    """Base class for numeric and guard errors raised by this package."""


class RankDeficientError(MmpError):
    """A column subset of the sensing matrix is (numerically) rank deficient."""

    def __init__(self, support):
        self.support = tuple(sorted(support))
        super().__init__(f"rank-deficient column subset {self.support}")


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    """An m x n real sensing matrix with column access by 1-based index."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asfortranarray(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("sensing matrix must be 2-D with positive dimensions")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sensing matrix entries must be finite")
        object.__setattr__(self, "entries", arr)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def column(self, index: int) -> np.ndarray:
        """Column by 1-based index."""
        if not 1 <= index <= self.n:
            raise ValueError(f"column index {index} outside 1..{self.n}")
        return self.entries[:, index - 1]

    def columns(self, support) -> np.ndarray:
        """Submatrix of the 1-based indices in `support`, in the given order."""
        idx = _as_index_array(support, self.n)
        return self.entries[:, idx]


@dataclass(frozen=True, eq=False)
class SparseSignal:
    """Length-n signal vector together with its support set (1-based)."""

    values: np.ndarray
    support: frozenset = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("signal must be a vector")
        object.__setattr__(self, "values", vals)
        object.__setattr__(
            self, "support", frozenset(int(i) + 1 for i in np.nonzero(vals)[0])
        )

    @property
    def sparsity(self) -> int:
        return len(self.support)


@dataclass(frozen=True, eq=False)
class Measurement:
    """Measurement vector, with the exact noise vector when synthetic."""

    y: np.ndarray
    noise: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise ValueError("measurements must be a finite vector")
        object.__setattr__(self, "y", y)
        if self.noise is not None:
            v = np.asarray(self.noise, dtype=np.float64)
            if v.shape != y.shape:
                raise ValueError("noise length must match measurements")
            object.__setattr__(self, "noise", v)

    @property
    def noise_norm(self) -> float:
        return 0.0 if self.noise is None else float(np.linalg.norm(self.noise))


@dataclass(frozen=True, eq=False)
class Path:
    """One candidate: selected column indices plus its least-squares state.

    `indices` keeps selection order, `canonical` is the sorted copy that
    defines path identity: two paths are equal (and hash alike) exactly
    when their canonical supports match, which is what merging relies on.
    `coefficients` is the LS fit over the canonical support and
    `residual` is y minus that fit.
    """

    indices: tuple
    canonical: tuple
    coefficients: np.ndarray
    residual: np.ndarray
    residual_norm_sq: float

    def __len__(self):
        return len(self.indices)

    def __eq__(self, other):
        if not isinstance(other, Path):
            return NotImplemented
        return self.canonical == other.canonical

    def __hash__(self):
        return hash(self.canonical)


@dataclass(frozen=True)
class CandidateSet:
    """The deduplicated set of paths alive at one iteration."""

    iteration: int
    paths: tuple

    def __post_init__(self):
        seen = set()
        for p in self.paths:
            if p.canonical in seen:
                raise ValueError(f"duplicate canonical support {p.canonical}")
            seen.add(p.canonical)

    def __len__(self):
        return len(self.paths)


def _as_index_array(support, n):
    """Validate 1-based indices and convert to a 0-based int64 array."""
    idx = np.asarray(sorted(int(i) for i in support), dtype=np.int64)
    if idx.size:
        if idx[0] < 1 or idx[-1] > n:
            raise ValueError(f"column indices must lie in 1..{n}")
        if np.any(np.diff(idx) == 0):
            raise ValueError("column indices must be distinct")
    return idx - 1


def correlate(matrix: SensingMatrix, residual: np.ndarray) -> np.ndarray:
    """Magnitudes of the column/residual correlations, |phi_i' r| for all i."""
    r = np.asarray(residual, dtype=np.float64)
    if r.shape != (matrix.m,):
        raise ValueError(f"residual length {r.shape} does not match m={matrix.m}")
    return np.abs(matrix.entries.T @ r)


def _top_l_zero_based(correlations, l, exclude_zero_based):
    """Top-l positions by magnitude, ties broken by ascending position."""
    c = np.abs(np.asarray(correlations, dtype=np.float64)).copy()
    if len(exclude_zero_based):
        c[list(exclude_zero_based)] = -np.inf
    available = c.size - len(exclude_zero_based)
    if l > available:
        raise ValueError(f"requested top {l} of only {available} available indices")
    # Stable sort on -c keeps ascending index among equal magnitudes.
    order = np.argsort(-c, kind="stable")
    return order[:l]


def top_l_indices(correlations, l: int, exclude=()) -> list:
    """The `l` largest-magnitude indices outside `exclude` (1-based).

    Returned in descending magnitude order; ties broken by ascending
    column index so repeated runs are identical.
    """
    if l < 1:
        raise ValueError("l must be positive")
    n = np.asarray(correlations).size
    excl = _as_index_array(exclude, n)
    picked = _top_l_zero_based(correlations, l, excl)
    return [int(i) + 1 for i in picked]


def least_squares_project(matrix: SensingMatrix, support, y: np.ndarray):
    """Least-squares fit of y onto the columns in `support` (a 1-based set).

    Returns ``(coefficients, residual, residual_norm_sq)`` with the
    coefficients ordered by ascending column index.  The empty support
    yields an empty fit and residual y.  Raises
    :class:`RankDeficientError` when the smallest singular value of the
    submatrix falls below 1e-12 times the largest.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (matrix.m,):
        raise ValueError(f"y length {y.shape} does not match m={matrix.m}")
    idx = _as_index_array(support, matrix.n)
    if idx.size == 0:
        return np.empty(0), y.copy(), float(y @ y)
    if idx.size > matrix.m:
        raise ValueError("support larger than the number of measurements")
    coef, resid, rss, ok = _kernels.batch_lstsq(matrix.entries, idx[None, :], y)
    if not ok[0]:
        raise RankDeficientError(idx + 1)
    return coef[0], resid[0], float(rss[0])


def make_path(matrix: SensingMatrix, indices, y: np.ndarray) -> Path:
    """Build a path from selection-ordered 1-based indices, refitting y."""
    indices = tuple(int(i) for i in indices)
    if len(set(indices)) != len(indices):
        raise ValueError("path indices must be distinct")
    canonical = tuple(sorted(indices))
    coef, resid, rss = least_squares_project(matrix, canonical, y)
    return Path(indices, canonical, coef, resid, rss)


def extend_path(parent: Path, new_index: int, matrix: SensingMatrix, y) -> Path:
    """Child of `parent` with `new_index` appended and the fit recomputed."""
    new_index = int(new_index)
    if new_index in parent.indices:
        raise ValueError(f"index {new_index} already on the path")
    return make_path(matrix, parent.indices + (new_index,), y)


# --- whitespace-delimited text format ("m n" header, one row per line) ---


def load_array(path) -> np.ndarray:
    """Read the text matrix format: an "m n" header then m rows of n floats."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise MmpError(f"{path}: expected 'm n' header line")
        try:
            m, n = int(header[0]), int(header[1])
        except ValueError as exc:
            raise MmpError(f"{path}: malformed header {header!r}") from exc
        try:
            data = np.loadtxt(fh, ndmin=2)
        except ValueError as exc:
            raise MmpError(f"{path}: malformed matrix body: {exc}") from exc
    if m < 1 or n < 1 or data.shape != (m, n):
        raise MmpError(f"{path}: body shape {data.shape} does not match header ({m}, {n})")
    return data


def load_matrix(path) -> SensingMatrix:
    return SensingMatrix(load_array(path))


def load_vector(path) -> np.ndarray:
    """Read a vector stored as an m x 1 (or 1 x n) text matrix."""
    arr = load_array(path)
    if 1 not in arr.shape:
        raise MmpError(f"{path}: expected a single row or column, got {arr.shape}")
    return arr.reshape(-1)


def save_array(arr, path):
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"{arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_matrix(matrix: SensingMatrix, path):
    save_array(matrix.entries, path)


def save_vector(vec, path):
    save_array(np.asarray(vec).reshape(-1, 1), path)
