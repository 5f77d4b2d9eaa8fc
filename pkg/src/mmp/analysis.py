"""Exact RIP constants at small scale and numeric verification of the
recovery guarantees.

`rip_constant` enumerates every column subset of a given size and takes
eigenvalue extremes of the Gram submatrices, so the resulting deltas are
exact (up to floating point) and usable as ground truth when checking
the correlation bounds, the residual bounds, and the recovery-condition
implications on instrumented solver runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice

import numpy as np

from . import _kernels
from .core import MmpError, SensingMatrix, SparseSignal, _top_l_zero_based, least_squares_project
from .solvers import PartialRecoveryError, SolverConfig, mmp_bf, mmp_bf_trace

SUBSET_GUARD = 10**6
_CHUNK = 16384


class EnumerationGuardError(MmpError):
    """Exact delta computation would enumerate too many subsets."""

    def __init__(self, n, order, count):
        self.count = count
        super().__init__(
            f"order-{order} delta of an n={n} matrix needs {count} subsets "
            f"(guard {SUBSET_GUARD}); use a smaller instance or a sampled estimate"
        )


@dataclass(frozen=True)
class RipReport:
    """Exact restricted-isometry constants per order for one matrix."""

    deltas: dict
    m: int
    n: int
    max_order: int

    def delta(self, order: int) -> float:
        """delta of the given order, with the empty-support convention
        delta_0 = 0."""
        if order == 0:
            return 0.0
        if order not in self.deltas:
            raise MmpError(f"delta of order {order} not in report (max {self.max_order})")
        return self.deltas[order]


def rip_constant(matrix: SensingMatrix, order: int) -> float:
    """Exact restricted isometry constant of the given order.

    Maximum over all `order`-sized column subsets S of
    ``max(lmax(G_S) - 1, 1 - lmin(G_S))`` where G_S is the Gram matrix of
    the subset.  Values >= 1 mean the isometry property fails at this
    order.
    """
    n = matrix.n
    if not 1 <= order <= n:
        raise ValueError(f"order must lie in 1..{n}")
    count = math.comb(n, order)
    if count > SUBSET_GUARD:
        raise EnumerationGuardError(n, order, count)
    gram = matrix.entries.T @ matrix.entries
    worst = 0.0
    combos = combinations(range(n), order)
    while True:
        chunk = np.array(list(islice(combos, _CHUNK)), dtype=np.intp)
        if chunk.size == 0:
            break
        sub = gram[chunk[:, :, None], chunk[:, None, :]]
        eigs = np.linalg.eigvalsh(sub)
        worst = max(worst, float(np.max(eigs[:, -1] - 1.0)), float(np.max(1.0 - eigs[:, 0])))
    return worst


def rip_report(matrix: SensingMatrix, max_order: int) -> RipReport:
    """Exact deltas for every order 1..max_order."""
    deltas = {order: rip_constant(matrix, order) for order in range(1, max_order + 1)}
    return RipReport(deltas, matrix.m, matrix.n, max_order)


def bf_recovery_bound(K: int, L: int) -> float:
    """Delta threshold on order K+L under which the breadth-first search
    recovers any K-sparse signal from noiseless measurements."""
    if K < 1 or L < 1:
        raise ValueError("K and L must be positive")
    return math.sqrt(L) / (math.sqrt(K) + 2 * math.sqrt(L))


def first_iter_bound(K: int, L: int) -> float:
    """Weaker delta threshold that already guarantees a true index among
    the first iteration's L selections."""
    if K < 1 or L < 1:
        raise ValueError("K and L must be positive")
    return math.sqrt(L) / (math.sqrt(K) + math.sqrt(L))


@dataclass(frozen=True)
class GuaranteeConstants:
    """Noisy-recovery constants; +inf where the defining denominator is
    not positive (the condition cannot hold there)."""

    bf_bound: float
    gamma: float
    mu: float
    lam: float
    zeta: float
    tau: float

    def as_dict(self) -> dict:
        return {
            "bf_recovery_bound": self.bf_bound,
            "gamma": self.gamma,
            "mu": self.mu,
            "lambda": self.lam,
            "zeta": self.zeta,
            "tau": self.tau,
        }


def noisy_constants(delta_K, delta_2K, delta_KL, K: int, L: int) -> GuaranteeConstants:
    """Evaluate the support-identification constants from exact deltas.

    ``delta_KL`` is the constant of order K+L.  gamma governs the first
    iteration, mu the later iterations, lam the final minimal-residual
    selection; zeta = max(gamma, mu, lam) and tau = 1/sqrt(1 - delta_K)
    bounds the reconstruction error once the support is identified.
    """
    for name, d in (("delta_K", delta_K), ("delta_2K", delta_2K), ("delta_KL", delta_KL)):
        if not 0 <= d < 1:
            raise ValueError(f"{name} must lie in [0, 1), got {d}")
    if K < 1 or L < 1:
        raise ValueError("K and L must be positive")
    sk, sl = math.sqrt(K), math.sqrt(L)
    slk = math.sqrt(L * K)

    denom = slk - (slk + K) * delta_KL
    gamma = math.sqrt(1 + delta_KL) * (sl + sk) / denom if denom > 0 else math.inf

    denom = sl - (2 * sl + sk) * delta_KL
    mu = (
        math.sqrt(1 + delta_KL) * (1 - delta_KL) * (sl + sk) / denom
        if denom > 0
        else math.inf
    )

    denom = (1 - delta_K) ** 3 - (1 + delta_K) * delta_2K**2
    lam = math.sqrt(2 * (1 - delta_K) ** 2 / denom) if denom > 0 else math.inf

    return GuaranteeConstants(
        bf_bound=bf_recovery_bound(K, L),
        gamma=gamma,
        mu=mu,
        lam=lam,
        zeta=max(gamma, mu, lam),
        tau=1 / math.sqrt(1 - delta_K),
    )


def guarantee_constants(delta_K, delta_2K, delta_KL, K: int, L: int) -> GuaranteeConstants:
    """Total version of :func:`noisy_constants`: deltas at or above 1 make
    every condition unsatisfiable, so all constants degenerate to +inf."""
    if min(delta_K, delta_2K, delta_KL) < 0:
        raise ValueError("deltas must be nonnegative")
    if max(delta_K, delta_2K, delta_KL) >= 1:
        inf = math.inf
        return GuaranteeConstants(bf_recovery_bound(K, L), inf, inf, inf, inf, inf)
    return noisy_constants(delta_K, delta_2K, delta_KL, K, L)


def lemma_alpha_bound(deltas: RipReport, k, K, L, x_rem_norm, v_norm=0.0) -> float:
    """Upper bound on the L-th largest wrong-column correlation at
    iteration k, for a candidate whose k-1 indices are all true.

    ``x_rem_norm`` is the norm of the still-missing true coefficients,
    ``v_norm`` the noise norm (0 for the noiseless bound).  Returns +inf
    when delta_{k-1} >= 1 (the bound's denominator degenerates).
    """
    d_rem = deltas.delta(L + K - k + 1)
    d_lk = deltas.delta(L + k - 1)
    d_K = deltas.delta(K)
    d_prev = deltas.delta(k - 1)
    d_L = deltas.delta(L)
    if d_prev >= 1:
        return math.inf
    signal = (d_rem + d_lk * d_K / (1 - d_prev)) * x_rem_norm / math.sqrt(L)
    noise = math.sqrt(1 + d_L) * v_norm / math.sqrt(L)
    return signal + noise


def lemma_beta_bound(deltas: RipReport, k, K, x_rem_norm, v_norm=0.0) -> float:
    """Lower bound on the best remaining-true-column correlation at
    iteration k, same setting as :func:`lemma_alpha_bound`.

    May be negative (vacuous); returned as-is.  -inf when
    delta_{k-1} >= 1.
    """
    d_rem = deltas.delta(K - k + 1)
    d_K = deltas.delta(K)
    d_prev = deltas.delta(k - 1)
    if d_prev >= 1:
        return -math.inf
    width = math.sqrt(K - k + 1)
    signal = (1 - d_rem - d_K**2 / (1 - d_prev)) * x_rem_norm / width
    noise = math.sqrt(1 + d_rem) * v_norm / width
    return signal - noise


def residual_bounds(matrix, y, true_support, gamma_set, x, v, report: RipReport | None = None):
    """Bounds sandwiching the residuals at the true and a competing support.

    Returns ``(upper_rT, lower_rGamma)``: the squared residual at the
    true support is at most ``||v||^2``; the squared residual at any
    size-K support Gamma is at least
    ``((1 - d_{|T-G|}) - (1 + d_{|G|}) d_{|G|+|T-G|}^2 / (1 - d_{|G|})^2) ||x_{T-G}||^2 - ||v||^2``.
    """
    x = np.asarray(x, dtype=np.float64)
    v_norm_sq = 0.0 if v is None else float(np.asarray(v) @ np.asarray(v))
    t = frozenset(int(i) for i in true_support)
    g = frozenset(int(i) for i in gamma_set)
    diff = sorted(t - g)
    n_diff, n_g = len(diff), len(g)

    def delta(order):
        if order == 0:
            return 0.0
        if report is not None:
            return report.delta(order)
        return rip_constant(matrix, order)

    x_rem_sq = float(sum(x[i - 1] ** 2 for i in diff))
    d_diff = delta(n_diff)
    d_g = delta(n_g)
    d_sum = delta(n_g + n_diff)
    if d_g >= 1:
        lower = -math.inf
    else:
        lower = ((1 - d_diff) - (1 + d_g) * d_sum**2 / (1 - d_g) ** 2) * x_rem_sq - v_norm_sq
    return v_norm_sq, lower


@dataclass(frozen=True)
class BoundTrace:
    """Correlation extremes and their bounds for one expanded candidate."""

    iteration: int
    path: tuple
    alpha_L: float
    beta_1: float
    bound_alpha: float
    bound_beta: float
    preconditions_hold: bool


def trace_bounds(matrix, x, v, config: SolverConfig, report: RipReport | None = None):
    """Instrument a breadth-first run and score every expanded candidate.

    For each candidate expanded at iteration k, records the L-th largest
    correlation over wrong columns (alpha) and the largest over the
    missing true columns (beta), next to the bound values computed from
    exact deltas.  ``preconditions_hold`` marks candidates made of true
    indices only; the bounds are only claims for those.
    """
    signal = x if isinstance(x, SparseSignal) else SparseSignal(np.asarray(x))
    t0 = np.array(sorted(i - 1 for i in signal.support), dtype=np.intp)
    t_set = set(int(i) for i in t0)
    wrong0 = np.array([j for j in range(matrix.n) if j not in t_set], dtype=np.intp)
    K, L = config.K, config.L
    if report is None:
        report = rip_report(matrix, K + L)
    y = matrix.entries @ signal.values
    v_norm = 0.0
    if v is not None:
        v = np.asarray(v, dtype=np.float64)
        y = y + v
        v_norm = float(np.linalg.norm(v))

    _, sets = mmp_bf_trace(matrix, y, config)
    traces = []
    for cset in sets[:-1]:
        k = cset.iteration + 1
        for path in cset.paths:
            sel0 = set(i - 1 for i in path.canonical)
            pure = sel0 <= t_set
            corr = np.abs(matrix.entries.T @ path.residual)
            alpha = float(np.sort(corr[wrong0])[-L]) if wrong0.size >= L else math.nan
            remaining = np.array(sorted(t_set - sel0), dtype=np.intp)
            beta = float(np.max(corr[remaining])) if remaining.size else math.nan
            x_rem = float(np.linalg.norm(signal.values[remaining]))
            traces.append(
                BoundTrace(
                    iteration=k,
                    path=path.canonical,
                    alpha_L=alpha,
                    beta_1=beta,
                    bound_alpha=lemma_alpha_bound(report, k, K, L, x_rem, v_norm),
                    bound_beta=lemma_beta_bound(report, k, K, x_rem, v_norm),
                    preconditions_hold=pure,
                )
            )
    return traces


@dataclass(frozen=True)
class GuaranteeCheck:
    """Outcome of one sufficiency-condition check against a solver run."""

    condition_holds: bool
    recovery_exact: bool
    consistent: bool
    zeta: float
    noise_norm: float


def verify_guarantee(matrix, x, v, config: SolverConfig) -> GuaranteeCheck:
    """Check one instance against the recovery guarantee (one direction).

    Noiseless instances use the delta_{K+L} threshold of
    :func:`bf_recovery_bound`; noisy instances require every nonzero
    coefficient to clear zeta times the noise norm.  The guarantee is a
    sufficient condition, so the only inconsistency is
    ``condition_holds and not recovery_exact``.
    """
    signal = x if isinstance(x, SparseSignal) else SparseSignal(np.asarray(x))
    support = signal.support
    K, L = config.K, config.L
    if len(support) != K:
        raise ValueError(f"signal sparsity {len(support)} does not match config K={K}")
    y = matrix.entries @ signal.values
    v_norm = 0.0
    if v is not None:
        v = np.asarray(v, dtype=np.float64)
        y = y + v
        v_norm = float(np.linalg.norm(v))

    if v_norm == 0.0:
        zeta = math.inf
        condition = rip_constant(matrix, K + L) < bf_recovery_bound(K, L)
    else:
        consts = guarantee_constants(
            rip_constant(matrix, K),
            rip_constant(matrix, 2 * K),
            rip_constant(matrix, K + L),
            K,
            L,
        )
        zeta = consts.zeta
        min_coeff = min(abs(signal.values[i - 1]) for i in support)
        condition = math.isfinite(zeta) and min_coeff >= zeta * v_norm

    try:
        out = mmp_bf(matrix, y, config)
        exact = set(out.support) == support
    except PartialRecoveryError:
        exact = False
    return GuaranteeCheck(
        condition_holds=bool(condition),
        recovery_exact=exact,
        consistent=not (condition and not exact),
        zeta=zeta,
        noise_norm=v_norm,
    )


def reference_recovery_bounds(K: int) -> dict:
    """Published delta thresholds of comparable greedy algorithms, echoed
    for side-by-side reporting (not certified by this package)."""
    if K < 1:
        raise ValueError("K must be positive")
    return {
        "mmp_bf_L_eq_K": {"order": 2 * K, "bound": bf_recovery_bound(K, K)},
        "cosamp": {"order": 4 * K, "bound": 0.1},
        "sp": {"order": 3 * K, "bound": 0.165},
        "romp": {"order": 2 * K, "bound": 0.03 / math.sqrt(math.log(2 * K))},
        "gomp_N_eq_K": {"order": K * K, "bound": 0.25},
    }


def low_coherence_matrix(m: int, n: int, rng, jitter: float = 0.0) -> SensingMatrix:
    """Unit-column matrix with small, known coherence for guarantee tests.

    For n <= m the columns are random orthonormal (all deltas 0).  For
    n = m + 1 they form a regular simplex frame, whose order-s delta is
    exactly (s-1)/m; `jitter` adds scaled Gaussian noise (renormalized)
    to sweep delta upward while keeping it small.
    """
    if n <= m:
        g = rng.standard_normal((m, n))
        q, r = np.linalg.qr(g)
        cols = q * np.sign(np.diag(r))
    elif n == m + 1:
        centered = np.eye(n) - 1.0 / n
        u, s, _ = np.linalg.svd(centered)
        cols = u[:, :m].T @ centered
        cols /= np.linalg.norm(cols, axis=0)
    else:
        raise ValueError("low-coherence construction needs n <= m + 1")
    if jitter > 0:
        cols = cols + jitter * rng.standard_normal(cols.shape)
        cols /= np.linalg.norm(cols, axis=0)
    return SensingMatrix(cols)


@dataclass
class CheckCounter:
    """Tally of how often a check applied and how often it failed."""

    applicable: int = 0
    violations: int = 0

    def record(self, ok: bool):
        self.applicable += 1
        if not ok:
            self.violations += 1


@dataclass(frozen=True)
class ImplicationReport:
    trials: int
    seed: int
    checks: dict

    @property
    def total_violations(self) -> int:
        return sum(c.violations for c in self.checks.values())

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "total_violations": self.total_violations,
            "checks": {
                name: {"applicable": c.applicable, "violations": c.violations}
                for name, c in self.checks.items()
            },
        }


def _selection_hits_true(matrix, residual, exclude0, L, true0):
    picked = _top_l_zero_based(np.abs(matrix.entries.T @ residual), L, sorted(exclude0))
    return bool(set(int(i) for i in picked) & true0)


def _all_support_residuals(matrix, y, K):
    """Squared residual norm of the LS fit on every size-K support."""
    supports = np.array(list(combinations(range(matrix.n), K)), dtype=np.int64)
    _, _, rss, ok = _kernels.batch_lstsq(matrix.entries, supports, y)
    return supports, rss, ok

_FLOAT_SLACK = 1e-12


def _leq(a, b):
    """a <= b with relative floating-point slack."""
    return a <= b + _FLOAT_SLACK * max(1.0, abs(a), abs(b))


def run_implication_suite(trials: int, seed: int, m=10, n=11, K=2, L=2) -> ImplicationReport:
    """Monte Carlo check that every guarantee holds on instrumented runs.

    Each trial draws a fresh instance (alternating Gaussian and
    low-coherence matrices so the preconditions hold reasonably often),
    computes exact deltas, and verifies: the delta-threshold and
    coefficient-threshold selection guarantees, the alpha/beta
    correlation bounds, the residual bounds at the true and competing
    supports, the minimal-residual identification and stability bounds,
    and the basic Gram-action consequences of the deltas.  Violations are
    counted, never raised.
    """
    rng = np.random.default_rng(seed)
    config = SolverConfig(K=K, L=L)
    checks: dict[str, CheckCounter] = {}

    def counter(name):
        return checks.setdefault(name, CheckCounter())

    for trial in range(trials):
        if trial % 2 == 0:
            matrix = low_coherence_matrix(m, min(n, m + 1), rng, jitter=rng.uniform(0, 0.15))
        else:
            matrix = SensingMatrix(rng.normal(0, 1 / math.sqrt(m), (m, n)))
        nn = matrix.n
        report = rip_report(matrix, max(2 * K, K + L))

        counter("delta_monotonicity").record(
            all(
                _leq(report.delta(o), report.delta(o + 1))
                for o in range(1, report.max_order)
            )
        )

        # Gram-action consequences of the exact deltas.
        for size in (K, 2 * K):
            sup = rng.choice(nn, size, replace=False)
            z = rng.standard_normal(size)
            z /= np.linalg.norm(z)
            sub = matrix.entries[:, sup]
            val = float(np.linalg.norm(sub.T @ (sub @ z)))
            d = report.delta(size)
            counter("gram_action_bounds").record(_leq(1 - d, val) and _leq(val, 1 + d))
        split = rng.permutation(nn)
        i1, i2 = split[:K], split[K : 2 * K]
        z = rng.standard_normal(K)
        val = float(
            np.linalg.norm(matrix.entries[:, i1].T @ (matrix.entries[:, i2] @ z))
        )
        counter("cross_gram_bound").record(_leq(val, report.delta(2 * K) * np.linalg.norm(z)))
        # The spectral-norm consequence only holds when every vector is
        # min(m, n)-sparse, i.e. n <= m; for n > m it is applied to column
        # submatrices (at most m columns), matching how the bound is used.
        if nn <= matrix.m and math.comb(nn, nn) <= SUBSET_GUARD:
            spec = float(np.linalg.norm(matrix.entries, 2))
            counter("spectral_norm_bound").record(
                _leq(spec, math.sqrt(1 + rip_constant(matrix, nn)))
            )
        sub_size = min(2 * K, matrix.m)
        sub = matrix.entries[:, rng.choice(nn, sub_size, replace=False)]
        counter("submatrix_spectral_bound").record(
            _leq(float(np.linalg.norm(sub, 2)), math.sqrt(1 + report.delta(sub_size)))
        )

        # K-sparse instance; noise scaled against zeta so the noisy
        # conditions hold in a fair share of trials.
        support0 = rng.choice(nn, K, replace=False)
        x = np.zeros(nn)
        x[support0] = rng.standard_normal(K)
        x[support0] += np.sign(x[support0]) * 0.2  # keep coefficients off zero
        signal = SparseSignal(x)
        true0 = set(int(i) for i in support0)
        y0 = matrix.entries @ x

        consts = guarantee_constants(
            report.delta(K), report.delta(2 * K), report.delta(K + L), K, L
        )
        min_coeff = np.min(np.abs(x[support0]))
        if math.isfinite(consts.zeta):
            v_norm = rng.uniform(0.2, 1.5) * min_coeff / consts.zeta
        else:
            v_norm = 0.1 * min_coeff
        v = rng.standard_normal(matrix.m)
        v *= v_norm / np.linalg.norm(v)

        for noise in (None, v):
            y = y0 if noise is None else y0 + noise
            nv = 0.0 if noise is None else v_norm
            d_kl = report.delta(K + L)

            # First-iteration selection guarantees.
            if noise is None and d_kl < first_iter_bound(K, L):
                counter("first_pick_noiseless").record(
                    _selection_hits_true(matrix, y, set(), L, true0)
                )
            if noise is not None and math.isfinite(consts.gamma) and min_coeff > consts.gamma * nv:
                counter("first_pick_noisy").record(
                    _selection_hits_true(matrix, y, set(), L, true0)
                )

            # Per-iteration guarantees and correlation bounds on the trace.
            later_ok = d_kl < bf_recovery_bound(K, L) if noise is None else (
                math.isfinite(consts.mu) and min_coeff > consts.mu * nv
            )
            for bt in trace_bounds(matrix, signal, noise, config, report):
                if not bt.preconditions_hold:
                    continue
                if not math.isnan(bt.alpha_L):
                    counter("alpha_upper_bound").record(_leq(bt.alpha_L, bt.bound_alpha))
                if not math.isnan(bt.beta_1):
                    counter("beta_lower_bound").record(_leq(bt.bound_beta, bt.beta_1))
                if later_ok and bt.iteration > 1:
                    sel0 = set(i - 1 for i in bt.path)
                    # Recompute the residual-based pick for this candidate.
                    _, resid, _ = least_squares_project(
                        matrix, [i + 1 for i in sel0], y
                    )
                    counter(
                        "later_pick_noiseless" if noise is None else "later_pick_noisy"
                    ).record(_selection_hits_true(matrix, resid, sel0, L, true0))

            # Residual bounds at the true and every competing support.  The
            # competing-support lower bound is only sound without noise
            # (with noise its squared-triangle step can reverse), so it is
            # checked on the noiseless measurements only.
            _, _, rss_t = least_squares_project(matrix, signal.support, y)
            counter("true_support_residual_upper").record(_leq(rss_t, nv**2))
            supports, rss_all, ok_all = _all_support_residuals(matrix, y, K)
            if noise is None:
                for srow, rs, ok in zip(supports, rss_all, ok_all):
                    if not ok:
                        continue
                    gamma_set = [int(i) + 1 for i in srow]
                    _, lower = residual_bounds(
                        matrix, y, signal.support, gamma_set, x, None, report
                    )
                    counter("wrong_support_residual_lower").record(_leq(lower, float(rs)))
            if noise is not None and math.isfinite(consts.lam) and min_coeff >= consts.lam * nv:
                best = float(np.min(rss_all[ok_all]))
                counter("min_residual_at_true_support").record(_leq(rss_t, best))

        # End-to-end sufficiency checks.
        counter("noiseless_recovery").record(
            verify_guarantee(matrix, signal, None, config).consistent
        )
        noisy_check = verify_guarantee(matrix, signal, v, config)
        counter("noisy_support_identification").record(noisy_check.consistent)
        if noisy_check.condition_holds:
            try:
                out = mmp_bf(matrix, y0 + v, config)
                err = float(np.linalg.norm(x - out.dense(nn)))
                counter("stability_bound").record(_leq(err, consts.tau * v_norm))
            except PartialRecoveryError:
                counter("stability_bound").record(False)

    return ImplicationReport(trials=trials, seed=seed, checks=checks)
