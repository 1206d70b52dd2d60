"""Tests for the feature maps: orthonormality, special values, span nesting."""

import math

import numpy as np
import pytest

from tiltshift.densities import SupportError
from tiltshift.features import (
    Fourier,
    GaussianRBF,
    ShiftedLegendre,
    Sine,
    Zero,
    design_matrix,
    feature_map_from_config,
    featurize,
    pointmass_predictor_dim,
    uniform_rbf,
)


def quad_gram(fmap, n=20001):
    """Gram matrix under the uniform measure via the trapezoid rule."""
    xs = np.linspace(0.0, 1.0, n)
    ws = np.full(n, 1.0 / (n - 1))
    ws[0] *= 0.5
    ws[-1] *= 0.5
    X = fmap.design_matrix(xs)
    return X.T @ (X * ws[:, None])


class TestSpecialValues:
    def test_sine_vanishes_at_origin(self):
        np.testing.assert_array_equal(featurize(Sine(3), 0.0), np.zeros(3))

    def test_shifted_legendre_degree_one(self):
        x = 0.37
        np.testing.assert_allclose(
            featurize(ShiftedLegendre(1), x), [1.0, math.sqrt(3.0) * (2 * x - 1)],
            rtol=1e-15)

    def test_zero_map_is_empty(self):
        assert featurize(Zero(), 0.4).shape == (0,)
        assert design_matrix(Zero(), [0.1, 0.9]).shape == (2, 0)

    def test_sine_design_matrix_at_origin(self):
        np.testing.assert_array_equal(design_matrix(Sine(2), [0.0, 0.0]), np.zeros((2, 2)))

    def test_rbf_at_own_center(self):
        np.testing.assert_array_equal(
            design_matrix(GaussianRBF((0.5,), 0.1), [0.5]), [[1.0]])

    def test_rbf_entry_formula(self):
        fmap = GaussianRBF((0.2, 0.8), 0.1)
        x = 0.35
        expected = np.exp(-np.array([(x - 0.2) ** 2, (x - 0.8) ** 2]) / (2 * 0.1**2))
        np.testing.assert_allclose(featurize(fmap, x), expected, rtol=1e-15)

    def test_out_of_domain_raises(self):
        with pytest.raises(SupportError):
            featurize(Sine(2), 1.5)
        with pytest.raises(SupportError):
            design_matrix(ShiftedLegendre(2), [0.2, -0.1])


class TestOrthonormality:
    def test_legendre_gram_is_identity(self):
        gram = quad_gram(ShiftedLegendre(6))
        np.testing.assert_allclose(gram, np.eye(7), atol=1e-6)

    def test_legendre_plain_average_gram(self):
        # Unweighted (1/N) X'X over a uniform midpoint grid is identity to 1e-4.
        n = 20001
        xs = (np.arange(n) + 0.5) / n
        X = ShiftedLegendre(3).design_matrix(xs)
        np.testing.assert_allclose(X.T @ X / n, np.eye(4), atol=1e-4)

    def test_fourier_gram_is_identity(self):
        gram = quad_gram(Fourier(9))
        np.testing.assert_allclose(gram, np.eye(9), atol=1e-6)

    def test_sine_gram_is_identity(self):
        gram = quad_gram(Sine(8))
        np.testing.assert_allclose(gram, np.eye(8), atol=1e-6)


class TestProperties:
    def test_featurize_is_pure(self):
        fmap = GaussianRBF((0.1, 0.5, 0.9), 0.07)
        a = featurize(fmap, 0.333)
        b = featurize(fmap, 0.333)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("fmap", [
        ShiftedLegendre(12), Sine(10), Fourier(11), uniform_rbf(25, 0.1),
    ])
    def test_no_nan_inf_on_support(self, fmap):
        xs = np.linspace(0.0, 1.0, 2001)
        assert np.all(np.isfinite(fmap.design_matrix(xs)))

    def test_sine_span_nesting(self):
        xs = np.linspace(0.0, 1.0, 501)
        small = Sine(3).design_matrix(xs)
        big = Sine(7).design_matrix(xs)
        coef, *_ = np.linalg.lstsq(big, small, rcond=None)
        resid = small - big @ coef
        assert np.max(np.abs(resid)) < 1e-10

    def test_uniform_rbf_centers_span_unit_interval(self):
        fmap = uniform_rbf(25, 0.1)
        assert fmap.centers[0] == 0.0 and fmap.centers[-1] == 1.0
        assert fmap.output_dim == 25


class TestPointmassDimensionRule:
    @pytest.mark.parametrize("n,L,expected", [
        (512, 8, 2),     # 64**0.2 = 2.297 -> 2
        (1024, 8, 3),    # 128**0.2 = 2.639 -> 3
        (8192, 1, 6),    # 8192**0.2 = 6.063 -> 6
        (2, 2, 1),       # floor at one
    ])
    def test_rounding_rule(self, n, L, expected):
        assert pointmass_predictor_dim(n, L) == expected


class TestConfigParsing:
    def test_families_round_trip(self):
        assert feature_map_from_config({"family": "sine", "num_frequencies": 4}) == Sine(4)
        assert feature_map_from_config(
            {"family": "shifted_legendre", "degree": 3}) == ShiftedLegendre(3)
        assert feature_map_from_config(
            {"family": "gaussian_rbf", "num_centers": 5, "bandwidth": 0.2}) == uniform_rbf(5, 0.2)
        with pytest.raises(ValueError):
            feature_map_from_config({"family": "wavelet"})
