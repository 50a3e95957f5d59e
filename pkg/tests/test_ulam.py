"""Tests for the Ulam model of the averaged operator."""

import numpy as np
import pytest

from lsvlab.errors import DomainError
from lsvlab.models import Observable, ParamLaw
from lsvlab.orbits import Y
from lsvlab.ulam import (
    build_ulam,
    correlation_curve_mc,
    correlation_curve_operator,
    density_slope,
    fixed_point_check,
    induced_operator_diagnostic,
    load_ulam,
    mass_on,
    save_correlations,
    save_ulam,
    stationary_density,
    stationary_table,
)
from lsvlab.utils.markov import check_row_stochastic


@pytest.fixture(scope="module")
def small_model():
    model = build_ulam(ParamLaw.mixture([(0.5, 0.5), (0.8, 0.5)]), 128, quadrature=8)
    stationary_density(model)
    return model


class TestBuild:
    def test_rows_are_stochastic(self, small_model):
        assert len(check_row_stochastic(small_model.matrix, 1e-12)) == 0
        assert small_model.cells == 128

    def test_entries_nonnegative(self, small_model):
        assert small_model.matrix.data.min() >= 0.0

    def test_right_half_is_deterministic(self, small_model):
        # the right branch does not depend on the parameter
        other = build_ulam(ParamLaw.delta(0.3), 128, quadrature=8)
        half = np.searchsorted(small_model.edges, 0.5)
        a = small_model.matrix[half:].toarray()
        b = other.matrix[half:].toarray()
        assert np.allclose(a, b, atol=1e-14)

    def test_meta(self, small_model):
        assert small_model.meta["law"] == "mixture(0.5:0.5, 0.8:0.5)"
        assert small_model.meta["nnz"] == small_model.matrix.nnz

    def test_rejects_powerlaw(self):
        with pytest.raises(DomainError):
            build_ulam(ParamLaw.powerlaw(0.5, 1.0), 128)

    def test_rejects_coarse_grid(self):
        with pytest.raises(ValueError):
            build_ulam(ParamLaw.delta(0.5), 32)


class TestStationary:
    def test_probability_vector(self, small_model):
        assert small_model.stationary.sum() == pytest.approx(1.0, abs=1e-12)
        assert small_model.stationary.min() >= 0.0

    def test_fixed_point(self, small_model):
        assert fixed_point_check(small_model) <= 1e-9

    def test_mass_on_whole_interval(self, small_model):
        assert mass_on(small_model, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert 0.0 < mass_on(small_model, Y.lo, Y.hi) < 0.5

    def test_density_blows_up_at_zero(self, small_model):
        density = small_model.density
        assert density[0] > density[-1]

    def test_table(self, small_model):
        table = stationary_table(small_model)
        assert list(table.columns) == ["cell_lo", "cell_hi", "density"]
        assert len(table) == 128

    @pytest.mark.slow
    def test_density_slope_point_mass(self):
        model = build_ulam(ParamLaw.delta(0.5), 2048)
        fit = density_slope(model)
        assert fit is not None
        assert fit.slope == pytest.approx(-0.5, abs=0.1)


class TestCorrelations:
    def test_constant_psi_is_uncorrelated(self, small_model):
        series = correlation_curve_operator(small_model, Observable.polynomial([0.0, 1.0]), Observable.constant(1.0), 50)
        assert np.max(np.abs(series.value)) < 1e-10
        assert series.method == "operator"

    def test_lag_zero_is_covariance(self, small_model):
        phi = Observable.polynomial([0.0, 1.0])
        series = correlation_curve_operator(small_model, phi, phi, 5, measure="stationary")
        assert series.value[0] > 0.0
        assert len(series.n) == 6

    def test_decay(self, small_model):
        phi = Observable.polynomial([0.0, 1.0])
        series = correlation_curve_operator(small_model, phi, phi, 200)
        assert abs(series.value[200]) < abs(series.value[1])

    def test_rejects_unknown_measure(self, small_model):
        with pytest.raises(ValueError):
            correlation_curve_operator(small_model, Observable.constant(1.0), Observable.constant(1.0), 5, measure="other")

    def test_rejects_zero_lags(self, small_model):
        with pytest.raises(ValueError):
            correlation_curve_operator(small_model, Observable.constant(1.0), Observable.constant(1.0), 0)


class TestPersistence:
    def test_save_and_load(self, small_model, tmp_path):
        checksums = save_ulam(small_model, tmp_path)
        assert set(checksums) == {"ulam_matrix.csv", "ulam_header.json"}
        loaded = load_ulam(tmp_path)
        assert np.allclose(loaded.edges, small_model.edges)
        assert np.allclose(loaded.matrix.toarray(), small_model.matrix.toarray())
        assert np.allclose(loaded.stationary, small_model.stationary)
        assert (tmp_path / "ulam_matrix.meta.json").exists()

    def test_save_correlations(self, small_model, tmp_path):
        phi = Observable.polynomial([0.0, 1.0])
        series = correlation_curve_operator(small_model, phi, phi, 20)
        digest = save_correlations(series, tmp_path / "correlations.csv")
        assert len(digest) == 64
        assert (tmp_path / "correlations.csv").exists()


class TestMonteCarlo:
    def test_agrees_with_operator(self):
        # zero Lebesgue mean removes the centering from both estimates
        phi = Observable.polynomial([-0.5, 1.0])
        psi = Observable.polynomial([0.0, 1.0])
        lags = np.array([1, 2, 4, 8])
        operator = correlation_curve_operator(build_ulam(ParamLaw.delta(0.5), 1024), phi, psi, 8)
        finer = correlation_curve_operator(build_ulam(ParamLaw.delta(0.5), 2048), phi, psi, 8)
        discretization = np.abs(operator.value - finer.value)[lags]
        mc = correlation_curve_mc(ParamLaw.delta(0.5), phi, psi, 8, 100_000, master_seed=3, psi_mean=0.0, lags=lags)
        assert mc.method == "monte_carlo"
        assert np.all(mc.stderr[mc.n > 0] > 0)
        gap = np.abs(mc.value - operator.value[lags])
        assert np.all(gap <= 3.0 * mc.stderr + 2.0 * discretization + 1e-5)

    def test_independent_of_workers(self):
        phi = Observable.polynomial([0.0, 1.0])
        lags = np.array([1, 3, 5])
        kwargs = dict(n_samples=2000, master_seed=1, psi_mean=0.5, lags=lags)
        one = correlation_curve_mc(ParamLaw.delta(0.5), phi, phi, 5, workers=1, **kwargs)
        two = correlation_curve_mc(ParamLaw.delta(0.5), phi, phi, 5, workers=2, **kwargs)
        assert np.allclose(one.value, two.value, rtol=0.0, atol=1e-14)


class TestInducedDiagnostic:
    def test_mass_is_kept_at_every_step(self):
        report = induced_operator_diagnostic(ParamLaw.delta(0.5), 4, 3, n_samples=20_000, master_seed=2)
        assert report.ks.tolist() == [1, 2, 3]
        assert report.mass_in == pytest.approx(0.75)
        assert np.allclose(report.mass_out, report.mass_out[0], rtol=0.0, atol=1e-12)
        assert report.mass_out[0] == pytest.approx(0.75, abs=0.01)
        assert np.all(report.sup_norms > 0)

    def test_rejects_long_horizons(self):
        with pytest.raises(ValueError):
            induced_operator_diagnostic(ParamLaw.delta(0.5), 4, 11)

    @pytest.mark.slow
    def test_mass_within_tolerance(self):
        report = induced_operator_diagnostic(ParamLaw.delta(0.75), 4, 2, n_samples=400_000, master_seed=4)
        assert np.all(np.abs(report.mass_out - report.mass_in) <= 1e-3)

    @pytest.mark.slow
    def test_seminorms_settle_to_bounded_term(self):
        report = induced_operator_diagnostic(ParamLaw.delta(0.75), 4, 6, n_samples=400_000, master_seed=5)
        assert not report.noisy
        slack = 2.0 * report.noise_floor
        assert abs(report.seminorms[-1] - report.seminorms[-2]) <= 0.1 * report.seminorms[-1] + slack
        assert report.c_bounded > 0
        assert report.seminorms.max() <= abs(report.c_contract) + report.c_bounded + slack + 0.1 * report.seminorms.max()

    @pytest.mark.slow
    def test_seminorm_stable_across_grids(self):
        coarse = induced_operator_diagnostic(ParamLaw.delta(0.75), 4, 4, n_samples=400_000, master_seed=6)
        fine = induced_operator_diagnostic(ParamLaw.delta(0.75), 8, 4, n_samples=400_000, master_seed=6)
        slack = 2.0 * max(coarse.noise_floor, fine.noise_floor)
        assert abs(fine.seminorms[-1] - coarse.seminorms[-1]) <= 0.25 * fine.seminorms[-1] + slack


@pytest.mark.slow
class TestCorrelationSlopes:
    @pytest.mark.parametrize(
        "law, lo, hi",
        [
            (ParamLaw.delta(0.75), -0.43, -0.23),
            (ParamLaw.mixture([(0.5, 0.5), (1.5, 0.5)]), -1.15, -0.85),
        ],
    )
    def test_slope_follows_return_tail(self, law, lo, hi):
        model = build_ulam(law, 2048)
        phi = Observable.polynomial([0.0, 1.0])
        series = correlation_curve_operator(model, phi, phi, 10_000)
        assert series.slope_fit is not None
        assert series.slope_fit.lo >= 1000
        assert lo <= series.slope_fit.slope <= hi

    def test_slope_stable_under_refinement(self):
        phi = Observable.polynomial([0.0, 1.0])
        slopes = []
        for cells in (2048, 4096):
            model = build_ulam(ParamLaw.delta(0.75), cells)
            slopes.append(correlation_curve_operator(model, phi, phi, 10_000).slope_fit.slope)
        assert abs(slopes[0] - slopes[1]) < 0.05
