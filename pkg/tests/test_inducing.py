"""Tests for return-time tails and the escape proxy."""

import math

import numpy as np
import pytest

from lsvlab.errors import DomainError, ExcessCensoringWarning
from lsvlab.inducing import (
    annulus_concentration,
    annulus_step_count,
    annulus_steps,
    backward_preimage_xn,
    compare_estimators,
    escape_profile,
    escape_proxy_q,
    escape_time_median,
    tail_report_from_samples,
    tail_via_simulation,
    tail_via_xn,
)
from lsvlab.models import Observable, ParamLaw, TailReport
from lsvlab.params import SeededStream


@pytest.fixture
def pareto_sample():
    rng = np.random.default_rng(12)
    return (1.0 - rng.random(20_000)) ** (-1.0 / 1.5)


class TestBackwardPreimage:
    def test_first_preimage_is_half(self):
        assert backward_preimage_xn(SeededStream(0, 0, ParamLaw.delta(1.0)), 1) == 0.5

    def test_golden_preimage(self):
        x = backward_preimage_xn(SeededStream(0, 0, ParamLaw.delta(1.0)), 2)
        assert x == pytest.approx(0.30901699, abs=1e-8)

    def test_consumes_n_parameters(self):
        stream = SeededStream(0, 0, ParamLaw.uniform(0.5, 1.5))
        backward_preimage_xn(stream, 10)
        assert stream.consumed == 10

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            backward_preimage_xn(SeededStream(0, 0, ParamLaw.delta(1.0)), 0)


class TestTailViaXn:
    def test_shape_and_monotonicity(self):
        report = tail_via_xn(ParamLaw.uniform(0.6, 1.5), 200, 500, master_seed=1)
        assert len(report.grid) == 201
        assert report.survival[0] == 1.0
        assert report.survival[1] == 0.5
        assert np.all(np.diff(report.survival) <= 0)
        assert report.comparison["lebesgue_factor"] == 0.5

    def test_point_mass_slope(self):
        report = tail_via_xn(ParamLaw.delta(0.75), 10_000, 4, master_seed=0)
        assert report.slope_fit is not None
        assert report.slope_fit.slope == pytest.approx(-1.0 / 0.75, abs=0.1)

    def test_rejects_short_horizon(self):
        with pytest.raises(ValueError):
            tail_via_xn(ParamLaw.delta(0.75), 1, 10, master_seed=0)


class TestTailReport:
    def test_hill_index_of_pareto(self, pareto_sample):
        report = tail_report_from_samples(pareto_sample, np.zeros(len(pareto_sample), bool), "x", 0, bootstrap=50)
        assert report.hill_index == pytest.approx(1.5, abs=0.25)
        assert report.ci_lo <= report.ci_hi
        assert report.censored == 0
        assert report.sample_mean == pytest.approx(float(pareto_sample.mean()))

    def test_survival_is_nonincreasing(self, pareto_sample):
        report = tail_report_from_samples(pareto_sample, np.zeros(len(pareto_sample), bool), "x", 0, bootstrap=10)
        assert report.survival[0] == 1.0
        assert np.all(np.diff(report.survival) <= 0)
        assert np.array_equal(report.survival, report.survivors / report.total)

    def test_excess_censoring_warns(self, pareto_sample):
        censored = np.zeros(len(pareto_sample), bool)
        censored[:1000] = True
        with pytest.warns(ExcessCensoringWarning):
            report = tail_report_from_samples(pareto_sample, censored, "x", 0, bootstrap=10)
        assert report.censored_fraction == pytest.approx(0.05)

    def test_summary_is_plain(self, pareto_sample):
        summary = tail_report_from_samples(pareto_sample, np.zeros(len(pareto_sample), bool), "x", 0, bootstrap=10).summary()
        assert summary["statistic"] == "x"
        assert "samples" not in summary


class TestTailViaSimulation:
    def test_negative_observable_flips_sign(self):
        law = ParamLaw.delta(0.5)
        plus = tail_via_simulation(law, Observable.constant(1.0), 2000, 3, bootstrap=20)
        minus = tail_via_simulation(law, Observable.constant(-1.0), 2000, 3, bootstrap=20)
        assert plus.statistic == "tau"
        assert minus.statistic == "phi_Y"
        assert minus.hill_index == plus.hill_index

    def test_rejects_small_samples(self):
        with pytest.raises(ValueError):
            tail_via_simulation(ParamLaw.delta(0.5), Observable.constant(1.0), 100, 0)

    def test_compare_needs_raw_sample(self):
        empty = TailReport(grid=np.arange(3), survivors=np.ones(3), total=1, survival=np.ones(3))
        via_xn = tail_via_xn(ParamLaw.delta(0.75), 50, 4, master_seed=0)
        with pytest.raises(ValueError):
            compare_estimators(empty, via_xn)

    @pytest.mark.slow
    def test_hill_index_point_mass(self):
        report = tail_via_simulation(ParamLaw.delta(0.75), Observable.constant(1.0), 1_000_000, 0, bootstrap=100)
        assert 1.20 <= report.hill_index <= 1.47

    @pytest.mark.slow
    def test_estimators_agree(self):
        law = ParamLaw.delta(0.75)
        simulated = tail_via_simulation(law, Observable.constant(1.0), 200_000, 0, bootstrap=20)
        via_xn = tail_via_xn(law, 1000, 16, master_seed=0)
        agreement = compare_estimators(simulated, via_xn, lo=10, hi=1000)
        # pointwise 3 s.e. across ~1000 correlated points; allow the sup some room
        assert agreement["max_z"] < 4.5
        assert np.mean(agreement["z"] <= 3.0) > 0.95


class TestEscapeProxy:
    def test_point_mass_closed_form(self):
        # with omega = 1 the integrand is 1/(2t^2)
        q = escape_proxy_q(0.01, ParamLaw.delta(1.0), Observable.constant(1.0))
        assert q == pytest.approx(49.0, rel=1e-8)

    def test_domain(self):
        with pytest.raises(DomainError):
            escape_proxy_q(0.7, ParamLaw.delta(1.0), Observable.constant(1.0))

    def test_tracks_escape_time(self):
        law = ParamLaw.delta(1.0)
        for x in (1e-3, 3e-3, 1e-2):
            q = escape_proxy_q(x, law, Observable.constant(1.0))
            median = escape_time_median(x, law, 3)
            assert 0.8 <= median / q <= 1.2

    def test_annulus_step_count(self):
        n = 100
        expected = (math.exp(-math.sqrt(99)) - math.exp(-10)) / (math.exp(-10) * (2 * math.exp(-10)) ** 0.5)
        assert annulus_step_count(n, ParamLaw.delta(0.5)) == pytest.approx(expected, rel=1e-12)

    def test_annulus_index_positive(self):
        with pytest.raises(ValueError):
            annulus_step_count(0, ParamLaw.delta(0.5))

    def test_profile(self):
        profile = escape_profile(1e-3, ParamLaw.delta(1.0), Observable.constant(1.0), [90, 100])
        assert profile.q_of_x == pytest.approx(499.0, rel=1e-8)
        assert len(profile.N_n) == 2


class TestAnnulus:
    def test_steps_are_positive(self):
        steps, N_n = annulus_steps(4, ParamLaw.uniform(0.5, 1.0), 200, master_seed=0)
        assert len(steps) == 200
        assert np.all(steps >= 1)
        assert N_n > 0

    def test_eta_range(self):
        with pytest.raises(ValueError):
            annulus_concentration(4, ParamLaw.uniform(0.5, 1.0), 10, eta=1.5)

    @pytest.mark.slow
    def test_concentration(self):
        fraction = annulus_concentration(100, ParamLaw.uniform(0.5, 1.0), 10_000, eta=0.5, master_seed=0)
        assert fraction >= 0.9
