"""Tests for the covariate laws: exact pdfs, atoms, sampling, interpolation."""

import numpy as np
import pytest
from scipy import stats

from tiltshift.densities import (
    AtomMixture,
    Beta,
    ShiftPath,
    SupportError,
    TiltedCosine,
    Uniform01,
    equal_spaced_levels,
    interpolate_source,
    model_from_config,
    pointmass_source,
    ratio_span_kappa,
)

TRAP_N = 20001


def trapezoid_mass(model, n=TRAP_N):
    xs = np.linspace(0.0, 1.0, n)
    return np.trapezoid(model.pdf(xs), xs)


class TestPdf:
    def test_uniform_density_is_one(self):
        assert Uniform01().pdf(0.3) == 1.0

    def test_beta_closed_form_value(self):
        # x*(1-x)^4 / B(2,5) with B(2,5) = 1/30.
        assert Beta(2, 5).pdf(0.5) == pytest.approx(0.5 * 0.5**4 * 30.0, rel=1e-12)

    def test_atom_mixture_scales_continuous_part(self):
        model = pointmass_source(4.0)
        assert model.pdf(0.7) == pytest.approx(0.25, abs=1e-15)
        assert model.atoms() == [(0.0, 0.75)]

    def test_out_of_support_raises(self):
        with pytest.raises(SupportError):
            Beta(2, 5).pdf_array([0.5, 1.2])
        with pytest.raises(SupportError):
            Uniform01().pdf(-0.1)

    def test_zero_mass_atom_is_continuous_part(self):
        plain = Beta(2, 5)
        wrapped = AtomMixture(0.0, 0.0, plain)
        xs = np.linspace(0, 1, 129)
        np.testing.assert_array_equal(wrapped.pdf(xs), plain.pdf(xs))
        assert wrapped.atoms() == []

    @pytest.mark.parametrize("model", [
        Uniform01(),
        Beta(2, 5),
        Beta(5, 2),
        Beta(3.5, 3.5),
        TiltedCosine(0.5),
        TiltedCosine(ratio_span_kappa(0.13, 7.8)),
        pointmass_source(8.0),
    ])
    def test_total_mass_is_one(self, model):
        mass = trapezoid_mass(model) + model.total_atom_mass()
        assert mass == pytest.approx(1.0, abs=1e-8)

    def test_tilted_cosine_ratio_span(self):
        kappa = 2.047
        model = TiltedCosine(kappa)
        xs = np.linspace(0, 1, 4001)
        vals = model.pdf(xs)
        assert vals.max() / vals.min() == pytest.approx(np.exp(2 * kappa), rel=1e-6)


class TestSampling:
    def test_unit_atom_mass_always_emits_atom(self):
        rng = np.random.default_rng(0)
        draws = AtomMixture(0.0, 1.0, Uniform01()).sample(rng, 5)
        np.testing.assert_array_equal(draws, np.zeros(5))

    def test_beta_mean_matches_within_four_se(self):
        rng = np.random.default_rng(7)
        draws = Beta(2, 5).sample(rng, 320)
        mean, var = 2 / 7, (2 * 5) / ((2 + 5) ** 2 * (2 + 5 + 1))
        assert abs(draws.mean() - mean) <= 4 * np.sqrt(var / 320)

    def test_uniform_ks_statistic_below_critical(self):
        rng = np.random.default_rng(11)
        draws = Uniform01().sample(rng, 10000)
        stat = stats.kstest(draws, "uniform").statistic
        assert stat < 1.63 / np.sqrt(10000)  # 1% critical value

    def test_tilted_cosine_matches_cdf(self):
        rng = np.random.default_rng(3)
        model = TiltedCosine(2.0)
        draws = model.sample(rng, 20000)
        grid = np.linspace(0, 1, 4001)
        cdf_vals = np.concatenate([[0.0], np.cumsum(
            (model.pdf(grid[1:]) + model.pdf(grid[:-1])) / 2 * np.diff(grid))])
        cdf_vals /= cdf_vals[-1]
        stat = stats.kstest(draws, lambda t: np.interp(t, grid, cdf_vals)).statistic
        assert stat < 1.63 / np.sqrt(20000)

    def test_atom_mixture_frequency(self):
        rng = np.random.default_rng(5)
        model = pointmass_source(4.0)
        draws = model.sample(rng, 20000)
        frac = np.mean(draws == 0.0)
        assert abs(frac - 0.75) <= 4 * np.sqrt(0.75 * 0.25 / 20000)

    @pytest.mark.parametrize("model", [Beta(2, 5), TiltedCosine(1.3), pointmass_source(2.0)])
    def test_equal_seeds_give_identical_sequences(self, model):
        a = model.sample(np.random.default_rng(123), 257)
        b = model.sample(np.random.default_rng(123), 257)
        np.testing.assert_array_equal(a, b)

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            Uniform01().sample(np.random.default_rng(0), 0)


class TestShiftPath:
    @pytest.fixture
    def path(self):
        return ShiftPath(Beta(2, 5), Beta(5, 2), equal_spaced_levels(21))

    def test_endpoints(self, path):
        assert interpolate_source(path, 0.0) == Beta(2, 5)
        assert interpolate_source(path, 1.0) == Beta(5, 2)

    def test_midpoint_parameters(self, path):
        assert interpolate_source(path, 0.5) == Beta(3.5, 3.5)

    def test_level_zero_matches_target_pdf(self, path):
        xs = np.linspace(0, 1, 128)
        np.testing.assert_allclose(
            interpolate_source(path, 0.0).pdf(xs), Beta(2, 5).pdf(xs), atol=1e-12)

    def test_level_out_of_range(self, path):
        with pytest.raises(ValueError):
            interpolate_source(path, 1.5)

    def test_non_beta_endpoints_rejected(self):
        path = ShiftPath(Uniform01(), Beta(5, 2))
        with pytest.raises(TypeError):
            interpolate_source(path, 0.5)

    def test_equal_spacing_helper(self):
        levels = equal_spaced_levels(21)
        assert len(levels) == 21
        np.testing.assert_allclose(np.diff(levels), 0.05)


class TestConfigParsing:
    def test_round_trip_kinds(self):
        beta = model_from_config({"kind": "beta", "a": 2, "b": 5})
        assert beta == Beta(2, 5)
        mix = model_from_config({
            "kind": "atom_mixture", "atom_location": 0.0, "atom_mass": 0.5,
            "continuous_part": {"kind": "uniform01"},
        })
        assert mix == AtomMixture(0.0, 0.5, Uniform01())
        with pytest.raises(ValueError):
            model_from_config({"kind": "cauchy"})

    def test_ratio_span_kappa_bounds(self):
        kappa = ratio_span_kappa(0.13, 7.8)
        assert np.exp(2 * kappa) == pytest.approx(7.8 / 0.13, rel=1e-12)
