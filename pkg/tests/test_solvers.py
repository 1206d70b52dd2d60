"""Tests for the joint solver, weighted baselines, and ratio machinery.

The joint solver is cross-checked against an independent iterative minimizer
(L-BFGS on the raw objective with an analytic gradient) that shares no code
with the closed-form normal-equations path.
"""

import numpy as np
import pytest
from scipy import optimize

from tiltshift.densities import Beta, TiltedCosine, Uniform01
from tiltshift.features import GaussianRBF, ShiftedLegendre, Sine, Zero, uniform_rbf
from tiltshift.solvers import (
    DataError,
    DegenerateWeightsError,
    LabeledSample,
    RankDeficiencyError,
    TiltConfig,
    UnlabeledSample,
    exact_ratio_weights,
    exact_relative_weights,
    kernel_relative_ratio_cv,
    kernel_relative_ratio_fit,
    median_heuristic_bandwidth,
    tilt_fit,
    weighted_ridge_fit,
)


def joint_objective_and_grad(Xf, Xb, y, Xtb, lam, rf, rb):
    """Raw objective and gradient, for the independent iterative oracle."""
    n, m = len(y), Xtb.shape[0]
    df = Xf.shape[1]

    def fun(z):
        th, ga = z[:df], z[df:]
        resid = Xf @ th + Xb @ ga - y
        tgt = Xtb @ ga
        val = resid @ resid / n + lam * (tgt @ tgt) / m + rf * th @ th + rb * ga @ ga
        g_th = 2 * Xf.T @ resid / n + 2 * rf * th
        g_ga = 2 * Xb.T @ resid / n + 2 * lam * Xtb.T @ tgt / m + 2 * rb * ga
        return val, np.concatenate([g_th, g_ga])

    return fun


def iterative_minimizer(src, tgt, fmap, bmap, cfg):
    Xf = fmap.design_matrix(src.xs)
    Xb = bmap.design_matrix(src.xs)
    Xtb = bmap.design_matrix(tgt.xts)
    fun = joint_objective_and_grad(Xf, Xb, src.ys, Xtb, cfg.lam, cfg.ridge_f, cfg.ridge_b)
    z0 = np.zeros(Xf.shape[1] + Xb.shape[1])
    res = optimize.minimize(fun, z0, jac=True, method="L-BFGS-B",
                            options={"maxiter": 20000, "ftol": 1e-18, "gtol": 1e-14})
    return res.x[:Xf.shape[1]], res.x[Xf.shape[1]:]


def random_instance(rng, n=40, m=40, df=4, db=3):
    xs = rng.uniform(0, 1, n)
    ys = np.sin(5 * xs) + 0.5 * xs + 0.2 * rng.standard_normal(n)
    xts = rng.uniform(0, 1, m)
    fmap = ShiftedLegendre(df - 1)
    bmap = Sine(db)
    return LabeledSample(xs, ys), UnlabeledSample(xts), fmap, bmap


class TestTiltFit:
    def test_zero_auxiliary_reduces_to_least_squares(self):
        rng = np.random.default_rng(0)
        xs = rng.uniform(0, 1, 30)
        fmap = ShiftedLegendre(3)
        theta_true = np.array([0.5, -1.0, 0.25, 2.0])
        ys = fmap.design_matrix(xs) @ theta_true  # exactly realizable
        fit = tilt_fit(LabeledSample(xs, ys), UnlabeledSample(xs),
                       fmap, Zero(), TiltConfig(lam=1.0, ridge_f=0.0, ridge_b=0.0))
        np.testing.assert_allclose(fit.theta, theta_true, atol=1e-9)
        assert fit.gamma.size == 0

    def test_matches_iterative_minimizer(self):
        rng = np.random.default_rng(42)
        for trial in range(20):
            src, tgt, fmap, bmap = random_instance(rng, df=rng.integers(1, 4),
                                                   db=rng.integers(1, 4))
            cfg = TiltConfig(lam=float(10 ** rng.uniform(-2, 2)),
                             ridge_f=1e-6, ridge_b=1e-6)
            fit = tilt_fit(src, tgt, fmap, bmap, cfg)
            th, ga = iterative_minimizer(src, tgt, fmap, bmap, cfg)
            np.testing.assert_allclose(fit.theta, th, atol=1e-6)
            np.testing.assert_allclose(fit.gamma, ga, atol=1e-6)

    def test_huge_penalty_recovers_source_erm(self):
        rng = np.random.default_rng(1)
        src, tgt, fmap, bmap = random_instance(rng, n=200, m=200, df=4, db=4)
        fit = tilt_fit(src, tgt, fmap, bmap, TiltConfig(lam=1e12, ridge_f=0.0, ridge_b=0.0))
        erm = weighted_ridge_fit(src, fmap, np.ones(src.n), ridge=0.0)
        assert np.linalg.norm(fit.gamma) <= 1e-4 * np.linalg.norm(fit.theta)
        np.testing.assert_allclose(fit.theta, erm, atol=1e-4)

    def test_objective_reproducible_from_coefficients(self):
        rng = np.random.default_rng(2)
        src, tgt, fmap, bmap = random_instance(rng)
        cfg = TiltConfig(lam=0.5)
        fit = tilt_fit(src, tgt, fmap, bmap, cfg)
        Xf = fmap.design_matrix(src.xs)
        Xb = bmap.design_matrix(src.xs)
        Xtb = bmap.design_matrix(tgt.xts)
        resid = Xf @ fit.theta + Xb @ fit.gamma - src.ys
        tgtv = Xtb @ fit.gamma
        val = (resid @ resid / src.n + cfg.lam * (tgtv @ tgtv) / tgt.m
               + cfg.ridge_f * fit.theta @ fit.theta + cfg.ridge_b * fit.gamma @ fit.gamma)
        assert fit.source_objective == pytest.approx(val, rel=1e-10)

    def test_never_worse_than_source_erm_point(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            src, tgt, fmap, bmap = random_instance(rng)
            cfg = TiltConfig(lam=2.0)
            fit = tilt_fit(src, tgt, fmap, bmap, cfg)
            erm_theta = weighted_ridge_fit(src, fmap, np.ones(src.n), ridge=cfg.ridge_f)
            Xf = fmap.design_matrix(src.xs)
            resid = Xf @ erm_theta - src.ys
            at_erm = resid @ resid / src.n + cfg.ridge_f * erm_theta @ erm_theta
            assert fit.source_objective <= at_erm + 1e-10

    def test_continuity_in_lambda(self):
        rng = np.random.default_rng(4)
        src, tgt, fmap, bmap = random_instance(rng)
        lam = 3.7
        base = tilt_fit(src, tgt, fmap, bmap, TiltConfig(lam=lam))
        bumped = tilt_fit(src, tgt, fmap, bmap, TiltConfig(lam=lam * (1 + 1e-9)))
        rel = np.linalg.norm(bumped.theta - base.theta) / np.linalg.norm(base.theta)
        assert rel <= 1e-6

    def test_rank_deficiency_names_block(self):
        xs = np.full(12, 0.5)  # constant design: Legendre beyond degree 0 collapses
        ys = np.ones(12)
        with pytest.raises(RankDeficiencyError) as err:
            tilt_fit(LabeledSample(xs, ys), UnlabeledSample(xs),
                     ShiftedLegendre(2), Zero(), TiltConfig(lam=1.0, ridge_f=0.0, ridge_b=0.0))
        assert err.value.block == "f"

    def test_nan_inputs_rejected(self):
        xs = np.array([0.1, 0.2, 0.3])
        ys = np.array([1.0, np.nan, 0.0])
        with pytest.raises(DataError):
            tilt_fit(LabeledSample(xs, ys), UnlabeledSample(xs),
                     ShiftedLegendre(1), Zero(), TiltConfig(lam=1.0))

    def test_condition_estimate_positive(self):
        rng = np.random.default_rng(5)
        src, tgt, fmap, bmap = random_instance(rng)
        fit = tilt_fit(src, tgt, fmap, bmap, TiltConfig(lam=1.0))
        assert fit.condition_estimate >= 1.0


class TestWeightedRidge:
    def test_unit_weights_match_plain_ridge(self):
        rng = np.random.default_rng(6)
        src, _, fmap, _ = random_instance(rng)
        a = weighted_ridge_fit(src, fmap, np.ones(src.n), ridge=0.1)
        X = fmap.design_matrix(src.xs)
        expected = np.linalg.solve(X.T @ X / src.n + 0.1 * np.eye(4), X.T @ src.ys / src.n)
        np.testing.assert_allclose(a, expected, rtol=1e-10)

    def test_matched_domains_equal_source_fit(self):
        rng = np.random.default_rng(7)
        src, _, fmap, _ = random_instance(rng)
        p = Beta(2, 5)
        w = exact_ratio_weights(p, p, src.xs)
        np.testing.assert_array_equal(w, np.ones(src.n))
        np.testing.assert_allclose(
            weighted_ridge_fit(src, fmap, w, 1e-8),
            weighted_ridge_fit(src, fmap, np.ones(src.n), 1e-8), rtol=1e-12)

    def test_eigendecomposition_oracle(self):
        rng = np.random.default_rng(8)
        xs = rng.uniform(0, 1, 30)
        ys = rng.standard_normal(30)
        w = rng.uniform(0.1, 3.0, 30)
        fmap = ShiftedLegendre(3)
        got = weighted_ridge_fit(LabeledSample(xs, ys), fmap, w, ridge=0.05)
        X = fmap.design_matrix(xs)
        K = X.T @ (X * w[:, None]) / 30 + 0.05 * np.eye(4)
        rhs = X.T @ (w * ys) / 30
        evals, evecs = np.linalg.eigh(K)
        oracle = evecs @ ((evecs.T @ rhs) / evals)
        np.testing.assert_allclose(got, oracle, atol=1e-9)

    def test_invariant_to_weight_rescaling_without_ridge(self):
        rng = np.random.default_rng(9)
        xs = rng.uniform(0, 1, 50)
        ys = rng.standard_normal(50)
        w = rng.uniform(0.5, 2.0, 50)
        fmap = ShiftedLegendre(2)
        a = weighted_ridge_fit(LabeledSample(xs, ys), fmap, w, ridge=0.0)
        b = weighted_ridge_fit(LabeledSample(xs, ys), fmap, 37.0 * w, ridge=0.0)
        np.testing.assert_allclose(a, b, atol=1e-8)

    def test_zero_weights_rejected(self):
        src = LabeledSample(np.array([0.1, 0.9]), np.array([1.0, 2.0]))
        with pytest.raises(DegenerateWeightsError):
            weighted_ridge_fit(src, ShiftedLegendre(0), np.zeros(2), 0.0)


class TestExactWeights:
    def test_matched_pair_gives_ones(self):
        p = Beta(3, 3)
        xs = np.linspace(0.05, 0.95, 11)
        np.testing.assert_allclose(exact_ratio_weights(p, p, xs), np.ones(11), rtol=1e-14)

    def test_symmetric_pair_at_midpoint(self):
        assert exact_ratio_weights(Beta(5, 2), Beta(2, 5), [0.5])[0] == pytest.approx(1.0, rel=1e-12)

    def test_closed_form_vs_quadrature_normalized(self):
        # Normalize an unnormalized Beta kernel by quadrature and compare.
        p, q = Beta(3.5, 3.5), Beta(2, 5)
        x = 0.1
        grid = np.linspace(0, 1, 200001)
        kern_p = grid**2.5 * (1 - grid) ** 2.5
        kern_q = grid**1.0 * (1 - grid) ** 4.0
        num = (x**1.0 * (1 - x) ** 4.0) / np.trapezoid(kern_q, grid)
        den = (x**2.5 * (1 - x) ** 2.5) / np.trapezoid(kern_p, grid)
        assert exact_ratio_weights(p, q, [x])[0] == pytest.approx(num / den, rel=1e-6)

    def test_vanishing_source_density_raises(self):
        with pytest.raises(ZeroDivisionError):
            exact_ratio_weights(Beta(2, 5), Uniform01(), [0.0])

    def test_relative_weights_matched_pair(self):
        p = Beta(2, 2)
        lam = 0.7
        xs = np.linspace(0.1, 0.9, 7)
        np.testing.assert_allclose(exact_relative_weights(p, p, lam, xs),
                                   np.full(7, 1 / (1 + lam)), rtol=1e-14)

    def test_lambda_zero_falls_back_to_raw_ratio(self):
        p, q = Beta(3, 2), Beta(2, 3)
        xs = np.linspace(0.1, 0.9, 9)
        np.testing.assert_array_equal(exact_relative_weights(p, q, 0.0, xs),
                                      exact_ratio_weights(p, q, xs))

    def test_relative_weights_bounded_by_inverse_lambda(self):
        rng = np.random.default_rng(10)
        p, q = Beta(5, 2), Beta(1.5, 6)
        xs = rng.uniform(0.01, 0.99, 50)
        for lam in (0.05, 0.5, 5.0):
            w = exact_relative_weights(p, q, lam, xs)
            assert np.all(w <= 1 / lam + 1e-12)
            assert np.all(w >= 0)


class TestKernelRatio:
    def test_self_ratio_close_to_one(self):
        rng = np.random.default_rng(21)
        src = rng.uniform(0, 1, 2000)
        tgt = rng.uniform(0, 1, 2000)
        est = kernel_relative_ratio_cv(src, tgt, alpha=0.0, rng=rng)
        grid = np.linspace(0.1, 0.9, 161)
        assert np.max(np.abs(est(grid) - 1.0)) < 0.1

    def test_recovers_smooth_ratio(self):
        rng = np.random.default_rng(22)
        q = TiltedCosine(0.5)
        src = Uniform01().sample(rng, 4000)
        tgt = q.sample(rng, 4000)
        est = kernel_relative_ratio_cv(src, tgt, alpha=0.0, rng=rng)
        grid = np.linspace(0.0, 1.0, 201)
        mse = np.mean((est(grid) - q.pdf(grid)) ** 2)
        assert mse < 0.05

    def test_output_clamped_nonnegative(self):
        rng = np.random.default_rng(23)
        src = rng.uniform(0, 1, 200)
        tgt = rng.uniform(0, 1, 200)
        est = kernel_relative_ratio_fit(src, tgt, alpha=0.2, centers=tgt[:20],
                                        bandwidth=0.05, ridge=1e-3)
        grid = np.linspace(0, 1, 1001)
        assert est(grid).min() >= 0.0

    def test_median_heuristic_positive(self):
        rng = np.random.default_rng(24)
        xs = rng.uniform(0, 1, 100)
        assert median_heuristic_bandwidth(xs) > 0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            kernel_relative_ratio_fit([0.1], [0.2], alpha=1.0, centers=[0.5],
                                      bandwidth=0.1, ridge=0.1)
        with pytest.raises(ValueError):
            kernel_relative_ratio_fit([0.1], [0.2], alpha=0.0, centers=[],
                                      bandwidth=0.1, ridge=0.1)
