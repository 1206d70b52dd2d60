"""Tests for generators, divergences, and the pointwise risk decomposition."""

import math

import numpy as np
import pytest

from tiltshift.bregman import (
    LimitCheckEntry,
    LogSumExp,
    Quadratic,
    SimplexError,
    SimplexPoint,
    barycenter_correction,
    bregman_div,
    kl_tilt_profiled_integrand,
    kl_tilt_surrogate,
    small_lambda_limit_check,
    tilt_risk_pointwise,
    weighted_jensen,
)


def random_simplex(rng, k):
    v = rng.uniform(0.2, 1.0, k)
    return v / v.sum()


class TestDivergences:
    def test_quadratic_is_half_squared_distance(self):
        gen = Quadratic(3)
        u = np.array([1.0, -2.0, 0.5])
        v = np.array([0.0, 1.0, 0.5])
        assert bregman_div(gen, u, v) == pytest.approx(0.5 * np.sum((u - v) ** 2), rel=1e-15)
        assert bregman_div(gen, u, u) == 0.0

    def test_kl_closed_form_two_classes(self):
        gen = LogSumExp(2)
        val = bregman_div(gen, [0.5, 0.5], [0.9, 0.1])
        expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
        assert val == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.5108, abs=5e-5)

    def test_primal_dual_identity(self):
        rng = np.random.default_rng(0)
        gen = LogSumExp(5)
        for _ in range(100):
            u = random_simplex(rng, 5)
            v = random_simplex(rng, 5)
            dual = gen.div_conjugate(u, v)
            primal = gen.div_primal(gen.grad_conjugate(v), gen.grad_conjugate(u))
            assert abs(dual - primal) <= 1e-10

    def test_kl_is_asymmetric(self):
        gen = LogSumExp(3)
        u = np.array([0.7, 0.2, 0.1])
        v = np.array([0.2, 0.3, 0.5])
        assert gen.div_conjugate(u, v) != pytest.approx(gen.div_conjugate(v, u), rel=1e-3)

    def test_kl_needs_positive_second_argument(self):
        gen = LogSumExp(2)
        with pytest.raises(SimplexError):
            gen.div_conjugate([0.5, 0.5], [1.0, 0.0])

    def test_softmax_log_round_trip(self):
        gen = LogSumExp(4)
        rng = np.random.default_rng(1)
        for _ in range(20):
            mu = random_simplex(rng, 4)
            np.testing.assert_allclose(gen.grad(gen.grad_conjugate(mu)), mu, atol=1e-12)

    def test_nonnegativity(self):
        rng = np.random.default_rng(2)
        gen = LogSumExp(6)
        for _ in range(50):
            assert bregman_div(gen, random_simplex(rng, 6), random_simplex(rng, 6)) >= 0.0


class TestWeightedJensen:
    def test_degenerate_weights_vanish(self):
        gen = LogSumExp(3)
        u = np.array([0.1, 0.2, -0.5])
        v = np.array([1.0, 0.0, 0.3])
        assert weighted_jensen(gen, 0.0, u, v) == pytest.approx(0.0, abs=1e-15)
        assert weighted_jensen(gen, 1.0, u, v) == pytest.approx(0.0, abs=1e-15)

    def test_quadratic_closed_form(self):
        gen = Quadratic(2)
        rng = np.random.default_rng(3)
        for _ in range(20):
            u, v = rng.standard_normal(2), rng.standard_normal(2)
            eta = rng.uniform(0, 1)
            expected = 0.5 * eta * (1 - eta) * np.sum((u - v) ** 2)
            assert weighted_jensen(gen, eta, u, v) == pytest.approx(expected, abs=1e-12)

    def test_splitting_identity(self):
        rng = np.random.default_rng(4)
        gen = LogSumExp(4)
        for _ in range(200):
            u, v, z = (rng.standard_normal(4) for _ in range(3))
            eta = rng.uniform(0, 1)
            lhs = eta * gen.div_primal(u, z) + (1 - eta) * gen.div_primal(v, z)
            rhs = weighted_jensen(gen, eta, u, v) + gen.div_primal(eta * u + (1 - eta) * v, z)
            assert abs(lhs - rhs) <= 1e-10

    def test_nonnegative_by_convexity(self):
        rng = np.random.default_rng(5)
        gen = LogSumExp(3)
        for _ in range(50):
            val = weighted_jensen(gen, rng.uniform(0, 1),
                                  rng.standard_normal(3), rng.standard_normal(3))
            assert val >= -1e-14


class TestPointwiseDecomposition:
    def test_barycenter_correction_zeroes_residual(self):
        gen = LogSumExp(4)
        rng = np.random.default_rng(6)
        mu_star = random_simplex(rng, 4)
        mu_f = random_simplex(rng, 4)
        v, rho = 0.3, 1.7
        b = barycenter_correction(gen, v, mu_star, mu_f)
        parts = tilt_risk_pointwise(gen, v, rho, mu_f + b, mu_star, mu_f)
        assert abs(parts.residual_term) <= 1e-12
        assert parts.risk_integrand == pytest.approx(parts.jensen_term, abs=1e-12)

    def test_matched_means_zero_jensen(self):
        gen = LogSumExp(3)
        rng = np.random.default_rng(7)
        mu = random_simplex(rng, 3)
        other = random_simplex(rng, 3)
        parts = tilt_risk_pointwise(gen, 0.4, 2.0, other, mu, mu)
        assert abs(parts.jensen_term) <= 1e-13

    def test_identity_on_random_instances(self):
        rng = np.random.default_rng(8)
        gen = LogSumExp(5)
        worst = 0.0
        for _ in range(200):
            mu_star = random_simplex(rng, 5)
            mu_f = random_simplex(rng, 5)
            mu_c = random_simplex(rng, 5)
            v = rng.uniform(0, 1)
            rho = rng.uniform(0.1, 5.0)
            parts = tilt_risk_pointwise(gen, v, rho, mu_c, mu_star, mu_f)
            worst = max(worst, abs(parts.risk_integrand
                                   - parts.jensen_term - parts.residual_term))
        assert worst <= 1e-10

    def test_quadratic_identity(self):
        gen = Quadratic(3)
        rng = np.random.default_rng(9)
        for _ in range(50):
            mu_star, mu_f, mu_c = (rng.standard_normal(3) for _ in range(3))
            parts = tilt_risk_pointwise(gen, rng.uniform(0, 1), rng.uniform(0.1, 3),
                                        mu_c, mu_star, mu_f)
            assert parts.risk_integrand == pytest.approx(
                parts.jensen_term + parts.residual_term, abs=1e-12)


class TestProfiledIntegrand:
    def test_zero_when_matched(self):
        rho = SimplexPoint(np.array([0.3, 0.7]))
        assert kl_tilt_profiled_integrand(rho, rho, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_zero_at_degenerate_exponents(self):
        rho = np.array([0.9, 0.1])
        mu = np.array([0.1, 0.9])
        assert kl_tilt_profiled_integrand(rho, mu, 0.0) == pytest.approx(0.0, abs=1e-15)
        assert kl_tilt_profiled_integrand(rho, mu, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_bhattacharyya_value(self):
        val = kl_tilt_profiled_integrand([0.9, 0.1], [0.1, 0.9], 0.5)
        assert val == pytest.approx(-math.log(0.6), rel=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            val = kl_tilt_profiled_integrand(random_simplex(rng, 4),
                                             random_simplex(rng, 4), rng.uniform(0, 1))
            assert val >= -1e-14

    def test_zero_probability_rejected(self):
        with pytest.raises(SimplexError):
            kl_tilt_profiled_integrand([1.0, 0.0], [0.5, 0.5], 0.5)


class TestSmallLambdaLimit:
    def test_exact_match_sentinel(self):
        gen = LogSumExp(3)
        theta = np.array([0.5, -0.2, 0.1])
        entries = small_lambda_limit_check(gen, 1.0, 1.0, theta, theta, [0.1, 0.01])
        assert all(isinstance(e, LimitCheckEntry) and e.exact_match for e in entries)

    def test_quadratic_scalar_closed_form(self):
        gen = Quadratic(1)
        entries = small_lambda_limit_check(gen, 1.0, 1.0, [1.0], [0.0],
                                           [1.0, 0.1, 0.01])
        for e in entries:
            assert e.ratio == pytest.approx(1.0 / (1.0 + e.lam), rel=1e-10)

    def test_logsumexp_ratio_converges_monotonically(self):
        rng = np.random.default_rng(11)
        gen = LogSumExp(3)
        theta_star = rng.standard_normal(3)
        theta_f = rng.standard_normal(3)
        lams = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
        entries = small_lambda_limit_check(gen, 1.3, 0.8, theta_star, theta_f, lams)
        gaps = [abs(e.ratio - 1.0) for e in entries]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[3] <= 0.01  # at lam = 1e-4


class TestKlSurrogate:
    def test_zero_auxiliary_kills_target_term(self):
        rng = np.random.default_rng(12)
        f_src = rng.standard_normal((6, 4))
        teach = rng.standard_normal((6, 4))
        f_tgt = rng.standard_normal((9, 4))
        out = kl_tilt_surrogate(f_src, np.zeros_like(f_src), teach,
                                f_tgt, np.zeros_like(f_tgt), lam=0.7)
        assert out["target_term"] == 0.0
        assert out["total"] == out["source_term"]

    def test_matched_teacher_kills_source_term(self):
        rng = np.random.default_rng(13)
        f_src = rng.standard_normal((5, 3))
        f_tgt = rng.standard_normal((5, 3))
        b_tgt = rng.standard_normal((5, 3))
        out = kl_tilt_surrogate(f_src, np.zeros_like(f_src), f_src,
                                f_tgt, b_tgt, lam=2.0, temperature=2.0)
        assert out["source_term"] == pytest.approx(0.0, abs=1e-14)
        assert out["target_term"] > 0.0


class TestSimplexPoint:
    def test_validation(self):
        SimplexPoint(np.array([0.25, 0.75]))
        with pytest.raises(SimplexError):
            SimplexPoint(np.array([0.5, 0.6]))
        with pytest.raises(SimplexError):
            SimplexPoint(np.array([1.5, -0.5]))
