"""Exact RIP constants, guarantee constants, correlation/residual bounds,
and the implication checks that tie them to instrumented solver runs."""

import math
from itertools import combinations

import numpy as np
import pytest

from mmp import SensingMatrix, SolverConfig, SparseSignal, least_squares_project
from mmp.analysis import (
    EnumerationGuardError,
    bf_recovery_bound,
    first_iter_bound,
    guarantee_constants,
    lemma_alpha_bound,
    lemma_beta_bound,
    low_coherence_matrix,
    noisy_constants,
    reference_recovery_bounds,
    residual_bounds,
    rip_constant,
    rip_report,
    run_implication_suite,
    trace_bounds,
    verify_guarantee,
)
from mmp.core import MmpError


def eig2x2(g):
    """Closed-form eigenvalues of a symmetric 2x2 matrix."""
    a, c = g[0, 0], g[0, 1]
    b = g[1, 1]
    mid = (a + b) / 2
    rad = math.sqrt(((a - b) / 2) ** 2 + c * c)
    return mid - rad, mid + rad


class TestRipConstant:
    def test_orthonormal_columns_zero(self):
        rng = np.random.default_rng(1)
        q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        phi = SensingMatrix(q[:, :6])
        for order in (1, 2, 4, 6):
            assert rip_constant(phi, order) == pytest.approx(0.0, abs=1e-12)

    def test_duplicated_column_is_one(self):
        e1 = np.zeros((4, 1))
        e1[0] = 1.0
        phi = SensingMatrix(np.hstack([e1, e1]))
        # Gram of the pair is all-ones: eigenvalues {0, 2}.
        assert rip_constant(phi, 2) == pytest.approx(1.0, abs=1e-14)

    def test_order_two_matches_closed_form(self):
        rng = np.random.default_rng(3)
        entries = rng.standard_normal((6, 10)) / math.sqrt(6)
        phi = SensingMatrix(entries)
        worst = 0.0
        for i, j in combinations(range(10), 2):
            g = entries[:, [i, j]].T @ entries[:, [i, j]]
            lo, hi = eig2x2(g)
            worst = max(worst, hi - 1, 1 - lo)
        assert rip_constant(phi, 2) == pytest.approx(worst, rel=1e-12)

    def test_monotone_in_order(self):
        rng = np.random.default_rng(5)
        phi = SensingMatrix(rng.normal(0, 1 / math.sqrt(8), (8, 12)))
        report = rip_report(phi, 5)
        deltas = [report.delta(o) for o in range(1, 6)]
        assert all(a <= b + 1e-12 for a, b in zip(deltas, deltas[1:]))

    def test_guard(self):
        phi = SensingMatrix(np.ones((4, 50)))
        with pytest.raises(EnumerationGuardError):
            rip_constant(phi, 10)

    def test_order_bounds(self):
        phi = SensingMatrix(np.eye(3))
        with pytest.raises(ValueError):
            rip_constant(phi, 0)
        with pytest.raises(ValueError):
            rip_constant(phi, 4)

    def test_report_missing_order(self):
        phi = SensingMatrix(np.eye(3))
        report = rip_report(phi, 2)
        assert report.delta(0) == 0.0
        with pytest.raises(MmpError):
            report.delta(3)


class TestRecoveryBounds:
    def test_equal_k_l_is_one_third(self):
        for k in (1, 2, 5, 9):
            assert bf_recovery_bound(k, k) == pytest.approx(1 / 3)

    def test_values(self):
        assert bf_recovery_bound(4, 1) == pytest.approx(0.25)
        assert bf_recovery_bound(1, 1) == pytest.approx(1 / 3)
        assert first_iter_bound(4, 4) == pytest.approx(0.5)
        assert first_iter_bound(4, 1) == pytest.approx(1 / 3)

    def test_first_iteration_bound_strictly_weaker(self):
        for k in range(1, 11):
            for l in range(1, 11):
                assert first_iter_bound(k, l) > bf_recovery_bound(k, l)


class TestGuaranteeConstants:
    def test_zero_delta_values(self):
        c = noisy_constants(0.0, 0.0, 0.0, 4, 4)
        assert c.gamma == pytest.approx(1.0)
        assert c.mu == pytest.approx(2.0)
        assert c.lam == pytest.approx(math.sqrt(2))
        assert c.zeta == pytest.approx(2.0)
        assert c.tau == pytest.approx(1.0)
        assert c.bf_bound == pytest.approx(1 / 3)

    def test_gamma_denominator_boundary(self):
        k, l = 4, 2
        # delta at which sqrt(LK) = (sqrt(LK) + K) * delta: gamma blows up.
        boundary = math.sqrt(l * k) / (math.sqrt(l * k) + k)
        c = noisy_constants(0.0, 0.0, boundary, k, l)
        assert c.gamma == math.inf
        below = noisy_constants(0.0, 0.0, boundary - 1e-6, k, l)
        assert math.isfinite(below.gamma)

    def test_zeta_is_max_of_reevaluated_parts(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            d = np.sort(rng.uniform(0, 0.6, 3))
            c = noisy_constants(d[0], d[1], d[2], 3, 2)
            sk, sl, slk = math.sqrt(3), math.sqrt(2), math.sqrt(6)
            den_g = slk - (slk + 3) * d[2]
            gamma = math.sqrt(1 + d[2]) * (sl + sk) / den_g if den_g > 0 else math.inf
            den_m = sl - (2 * sl + sk) * d[2]
            mu = (
                math.sqrt(1 + d[2]) * (1 - d[2]) * (sl + sk) / den_m
                if den_m > 0
                else math.inf
            )
            den_l = (1 - d[0]) ** 3 - (1 + d[0]) * d[1] ** 2
            lam = math.sqrt(2 * (1 - d[0]) ** 2 / den_l) if den_l > 0 else math.inf
            assert c.zeta == max(gamma, mu, lam)

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            noisy_constants(1.0, 0.0, 0.0, 2, 2)
        with pytest.raises(ValueError):
            noisy_constants(-0.1, 0.0, 0.0, 2, 2)

    def test_total_wrapper_degenerates_at_one(self):
        c = guarantee_constants(0.2, 1.5, 0.4, 2, 2)
        assert c.gamma == c.mu == c.lam == c.zeta == c.tau == math.inf
        assert c.bf_bound == pytest.approx(bf_recovery_bound(2, 2))


class TestLemmaBounds:
    def zero_report(self, max_order):
        return rip_report(SensingMatrix(np.eye(max_order + 1)), max_order)

    def test_alpha_zero_delta_noiseless_is_zero(self):
        report = self.zero_report(8)
        assert lemma_alpha_bound(report, 2, 3, 2, 1.7) == pytest.approx(0.0)

    def test_alpha_zero_delta_noise_term(self):
        report = self.zero_report(8)
        v = 0.3
        got = lemma_alpha_bound(report, 2, 3, 2, 1.7, v_norm=v)
        assert got == pytest.approx(v / math.sqrt(2))

    def test_beta_zero_delta(self):
        report = self.zero_report(8)
        got = lemma_beta_bound(report, 2, 4, 1.5)
        assert got == pytest.approx(1.5 / math.sqrt(3))
        noisy = lemma_beta_bound(report, 2, 4, 1.5, v_norm=0.6)
        assert noisy == pytest.approx((1.5 - 0.6) / math.sqrt(3))

    def test_beta_large_noise_goes_negative(self):
        report = self.zero_report(8)
        assert lemma_beta_bound(report, 2, 4, 0.1, v_norm=10.0) < 0

    def test_first_iteration_uses_delta_zero_convention(self):
        rng = np.random.default_rng(9)
        phi = low_coherence_matrix(10, 11, rng)
        report = rip_report(phi, 6)
        k, K, L = 1, 3, 3
        x_rem = 2.0
        # With delta_0 = 0 the k=1 correction term vanishes.
        expect = (report.delta(L + K) + report.delta(L) * report.delta(K)) * x_rem / math.sqrt(L)
        assert lemma_alpha_bound(report, k, K, L, x_rem) == pytest.approx(expect)

    def test_missing_order_errors(self):
        report = self.zero_report(3)
        with pytest.raises(MmpError):
            lemma_alpha_bound(report, 1, 3, 2, 1.0)


class TestTraceBounds:
    def test_instrumented_run_respects_bounds(self):
        rng = np.random.default_rng(11)
        phi = low_coherence_matrix(8, 9, rng, jitter=0.05)
        x = np.zeros(9)
        x[[1, 4]] = [1.2, -0.8]
        config = SolverConfig(K=2, L=2)
        for v in (None, 0.02 * rng.standard_normal(8)):
            traces = trace_bounds(phi, x, v, config)
            assert any(t.preconditions_hold for t in traces)
            for t in traces:
                if not t.preconditions_hold:
                    continue
                slack = 1e-12 * max(1.0, abs(t.bound_alpha))
                assert t.alpha_L <= t.bound_alpha + slack
                assert t.beta_1 >= t.bound_beta - slack


class TestResidualBounds:
    def test_gamma_equals_true_support(self):
        rng = np.random.default_rng(13)
        phi = low_coherence_matrix(8, 9, rng)
        x = np.zeros(9)
        x[[0, 3]] = [1.0, 2.0]
        v = 0.1 * rng.standard_normal(8)
        y = phi.entries @ x + v
        upper, lower = residual_bounds(phi, y, {1, 4}, {1, 4}, x, v)
        assert upper == pytest.approx(float(v @ v))
        assert lower == pytest.approx(-float(v @ v))

    def test_noiseless_lower_bound_over_all_supports(self):
        rng = np.random.default_rng(15)
        phi = low_coherence_matrix(8, 9, rng, jitter=0.03)
        report = rip_report(phi, 4)
        x = np.zeros(9)
        x[[2, 6]] = [0.9, -1.4]
        y = phi.entries @ x
        for gamma in combinations(range(1, 10), 2):
            _, rss = least_squares_project(phi, gamma, y)[1:]
            _, lower = residual_bounds(phi, y, {3, 7}, gamma, x, None, report)
            assert rss >= lower - 1e-12

    def test_true_support_residual_is_projected_noise(self):
        rng = np.random.default_rng(17)
        phi = SensingMatrix(rng.normal(0, 0.3, (8, 12)))
        x = np.zeros(12)
        x[[1, 5, 9]] = rng.standard_normal(3)
        v = 0.05 * rng.standard_normal(8)
        y = phi.entries @ x + v
        _, resid, rss = least_squares_project(phi, {2, 6, 10}, y)
        sub = phi.columns([2, 6, 10])
        p = sub @ np.linalg.solve(sub.T @ sub, sub.T)
        np.testing.assert_allclose(resid, v - p @ v, atol=1e-10)
        assert rss <= float(v @ v) + 1e-15


class TestVerifyGuarantee:
    def test_noiseless_condition_implies_recovery(self):
        rng = np.random.default_rng(19)
        phi = low_coherence_matrix(12, 13, rng)
        x = np.zeros(13)
        x[[0, 5]] = [1.0, -2.0]
        check = verify_guarantee(phi, x, None, SolverConfig(K=2, L=2))
        # Simplex frame: delta_4 = 3/12 < sqrt(2)/(sqrt(2)+2 sqrt(2)).
        assert check.condition_holds
        assert check.recovery_exact
        assert check.consistent

    def test_failed_condition_with_exact_recovery_is_consistent(self):
        rng = np.random.default_rng(21)
        phi = SensingMatrix(rng.normal(0, 1 / math.sqrt(10), (10, 20)))
        x = np.zeros(20)
        x[[3, 11]] = [2.0, 3.0]
        check = verify_guarantee(phi, x, None, SolverConfig(K=2, L=2))
        if not check.condition_holds and check.recovery_exact:
            assert check.consistent
        assert check.consistent or check.condition_holds

    def test_monte_carlo_implication(self):
        # The sufficiency direction must never be violated.  Gaussian
        # 8x12 draws exercise the condition-fails branch; near-simplex
        # m=12 frames (order-4 delta near 0.25 < 1/3) the condition-holds
        # branch.
        rng = np.random.default_rng(23)
        config = SolverConfig(K=2, L=2)
        inconsistent = 0
        held = 0
        for trial in range(500):
            if trial % 2 == 0:
                phi = low_coherence_matrix(12, 13, rng, jitter=rng.uniform(0, 0.1))
            else:
                phi = SensingMatrix(rng.normal(0, 1 / math.sqrt(8), (8, 12)))
            n = phi.n
            x = np.zeros(n)
            sup = rng.choice(n, 2, replace=False)
            x[sup] = rng.standard_normal(2) + np.sign(rng.standard_normal(2)) * 0.1
            check = verify_guarantee(phi, x, None, config)
            held += check.condition_holds
            inconsistent += not check.consistent
        assert inconsistent == 0
        assert held > 20  # the condition must actually trigger sometimes


class TestReferenceBounds:
    def test_echoed_constants(self):
        ref = reference_recovery_bounds(4)
        assert ref["cosamp"] == {"order": 16, "bound": 0.1}
        assert ref["sp"] == {"order": 12, "bound": 0.165}
        assert ref["gomp_N_eq_K"] == {"order": 16, "bound": 0.25}
        assert ref["romp"]["order"] == 8
        assert ref["romp"]["bound"] == pytest.approx(0.03 / math.sqrt(math.log(8)))
        assert ref["mmp_bf_L_eq_K"]["bound"] == pytest.approx(1 / 3)


class TestLowCoherenceMatrix:
    def test_simplex_deltas_are_exact(self):
        rng = np.random.default_rng(25)
        m = 10
        phi = low_coherence_matrix(m, m + 1, rng)
        np.testing.assert_allclose(np.linalg.norm(phi.entries, axis=0), 1.0, atol=1e-12)
        for order in (2, 3, 5):
            assert rip_constant(phi, order) == pytest.approx((order - 1) / m, abs=1e-10)

    def test_jitter_keeps_unit_columns(self):
        rng = np.random.default_rng(27)
        phi = low_coherence_matrix(9, 10, rng, jitter=0.1)
        np.testing.assert_allclose(np.linalg.norm(phi.entries, axis=0), 1.0, atol=1e-12)

    def test_orthonormal_below_m(self):
        rng = np.random.default_rng(29)
        phi = low_coherence_matrix(8, 6, rng)
        assert rip_constant(phi, 3) == pytest.approx(0.0, abs=1e-12)

    def test_oversized_n_rejected(self):
        rng = np.random.default_rng(31)
        with pytest.raises(ValueError):
            low_coherence_matrix(8, 12, rng)


class TestImplicationSuite:
    def test_zero_violations(self):
        report = run_implication_suite(trials=30, seed=0)
        assert report.total_violations == 0
        # Every named check must have been exercised.
        core_checks = {
            "alpha_upper_bound",
            "beta_lower_bound",
            "true_support_residual_upper",
            "wrong_support_residual_lower",
            "noiseless_recovery",
            "noisy_support_identification",
            "delta_monotonicity",
            "gram_action_bounds",
            "cross_gram_bound",
        }
        assert core_checks <= set(report.checks)
        for name in core_checks:
            assert report.checks[name].applicable > 0

    def test_report_serialization(self):
        report = run_implication_suite(trials=4, seed=1)
        data = report.as_dict()
        assert data["trials"] == 4
        assert data["total_violations"] == 0
        assert all(
            set(v) == {"applicable", "violations"} for v in data["checks"].values()
        )
