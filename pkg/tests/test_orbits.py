"""Tests for orbits, induced excursions and hitting times."""

import numpy as np
import pytest

from lsvlab.errors import CapExceeded, DomainError
from lsvlab.models import Interval, Observable, ParamLaw
from lsvlab.orbits import (
    Y,
    birkhoff_sums_induced,
    hitting_time,
    induced_endpoints,
    induced_excursion,
    kac_check,
    lagged_points,
    occupation_histogram,
    occupation_mean,
    run_orbit,
    simulate_excursions,
)
from lsvlab.params import SeededStream
from lsvlab.utils.grids import refined_edges


@pytest.fixture
def one():
    return Observable.constant(1.0)


def delta_stream(omega=1.0, index=0):
    return SeededStream(0, index, ParamLaw.delta(omega))


class TestRunOrbit:
    def test_fixed_point(self):
        assert np.all(run_orbit(0.0, delta_stream(0.7), 10) == 0.0)

    def test_right_branch_twice(self):
        assert np.allclose(run_orbit(0.75, delta_stream(), 2), [0.75, 0.5, 0.0])

    def test_left_branch(self):
        assert np.allclose(run_orbit(0.25, delta_stream(), 1), [0.25, 0.375])

    def test_length_and_range(self):
        stream = SeededStream(3, 0, ParamLaw.uniform(0.5, 1.5), block_size=100)
        orbit = run_orbit(0.3, stream, 1000)
        assert len(orbit) == 1001
        assert np.all((orbit >= 0) & (orbit <= 1))
        assert stream.consumed == 1000

    def test_rejects_outside_points(self):
        with pytest.raises(DomainError):
            run_orbit(1.2, delta_stream(), 3)

    def test_monotone_coupling_in_parameters(self):
        low = SeededStream(5, 0, ParamLaw.uniform(0.5, 1.0))
        high = SeededStream(5, 0, ParamLaw.powerlaw(0.7, 1.0))
        assert np.array_equal(
            SeededStream(5, 0, ParamLaw.uniform(0.5, 1.0)).take_uniforms(50),
            SeededStream(5, 0, ParamLaw.powerlaw(0.7, 1.0)).take_uniforms(50),
        )
        a = run_orbit(0.01, low, 500)
        b = run_orbit(0.01, high, 500)
        right = np.nonzero((a >= 0.5) | (b >= 0.5))[0]
        stop = int(right[0]) if len(right) else len(a) - 1
        assert stop > 1
        # smaller parameters climb at least as fast while both stay on the left branch
        assert np.all(a[:stop + 1] >= b[:stop + 1])


class TestInducedExcursion:
    def test_immediate_return(self, one):
        record = induced_excursion(0.8, delta_stream(), one)
        assert record.tau == 1
        assert record.birkhoff == 1.0
        assert record.x_return == pytest.approx(0.6)

    def test_left_branch_climb(self, one):
        record = induced_excursion(0.6, delta_stream(), one)
        assert record.tau >= 2
        assert record.x_return >= 0.5

    def test_birkhoff_equals_tau_for_constant_one(self, one):
        stream = SeededStream(5, 0, ParamLaw.uniform(0.5, 1.5))
        for x in np.linspace(0.52, 0.98, 24):
            record = induced_excursion(float(x), stream, one)
            assert record.birkhoff == float(record.tau)

    def test_discontinuity_at_three_quarters(self, one):
        below = induced_excursion(0.75 - 1e-9, delta_stream(), one)
        above = induced_excursion(0.75 + 1e-9, delta_stream(), one)
        assert below.tau > above.tau

    def test_entry_point_is_first_term(self):
        phi = Observable.polynomial([0.0, 1.0])
        record = induced_excursion(0.8, delta_stream(), phi)
        assert record.birkhoff == pytest.approx(0.8)

    def test_traced_matches_polynomial(self):
        law = ParamLaw.uniform(0.5, 1.5)
        poly = Observable.polynomial([1.0, 2.0])
        func = Observable.from_function(lambda x: 1.0 + 2.0 * x, lip=2.0)
        for x in (0.55, 0.7, 0.9):
            a = induced_excursion(x, SeededStream(8, 0, law), poly)
            b = induced_excursion(x, SeededStream(8, 0, law), func)
            assert a.tau == b.tau
            assert a.birkhoff == pytest.approx(b.birkhoff, rel=1e-12)

    def test_matches_hitting_time(self, one):
        law = ParamLaw.uniform(0.5, 1.5)
        for index in range(20):
            record = induced_excursion(0.6, SeededStream(1, index, law), one)
            assert record.tau == hitting_time(0.6, SeededStream(1, index, law), Y)

    def test_cap(self, one):
        with pytest.raises(CapExceeded) as info:
            induced_excursion(0.5, delta_stream(), one, cap=50)
        assert info.value.partial.censored
        assert info.value.partial.tau == 50

    def test_rejects_entry_outside_y(self, one):
        with pytest.raises(DomainError):
            induced_excursion(0.3, delta_stream(), one)


class TestHittingTime:
    def test_one_step(self):
        assert hitting_time(0.8, delta_stream(), Interval(lo=0.5, hi=0.65)) == 1

    def test_fixed_point_never_leaves(self):
        with pytest.raises(CapExceeded):
            hitting_time(0.0, delta_stream(), Interval(lo=0.5, hi=1.0), cap=1000)


class TestBirkhoffSums:
    def test_constant_one_counts_time(self, one):
        law = ParamLaw.delta(0.75)
        stream = SeededStream(2, 0, law)
        sums = birkhoff_sums_induced(50, stream, one, 0.9)
        assert np.all(np.diff(sums) >= 1)
        assert sums[-1] == stream.consumed

    def test_single_excursion(self, one):
        law = ParamLaw.uniform(0.5, 1.5)
        sums = birkhoff_sums_induced(1, SeededStream(4, 0, law), one, 0.7)
        record = induced_excursion(0.7, SeededStream(4, 0, law), one)
        assert sums[0] == record.birkhoff

    def test_cap_carries_partial_sums(self, one):
        with pytest.raises(CapExceeded) as info:
            birkhoff_sums_induced(3, delta_stream(), one, 0.75, cap=20)
        # 0.75 -> 0.5 returns at once; 0.5 -> 0 never returns
        assert list(info.value.partial) == [1.0]
        assert info.value.steps == 20

    def test_rejects_zero_excursions(self, one):
        with pytest.raises(ValueError):
            birkhoff_sums_induced(0, delta_stream(), one, 0.8)


class TestEnsembles:
    def test_simulate_excursions_constant_one(self, one):
        sample = simulate_excursions(ParamLaw.delta(0.5), one, 5000, master_seed=1, cap=10_000_000)
        assert len(sample.tau) == 5000
        assert np.array_equal(sample.birkhoff, sample.tau.astype(float))
        assert np.all(sample.x_return >= 0.5)
        assert sample.n_censored == 0

    def test_simulate_excursions_reproducible(self, one):
        law = ParamLaw.uniform(0.5, 1.5)
        a = simulate_excursions(law, one, 5000, master_seed=3)
        b = simulate_excursions(law, one, 5000, master_seed=3)
        assert np.array_equal(a.tau, b.tau)

    def test_censoring_recorded(self, one):
        sample = simulate_excursions(ParamLaw.delta(0.9), one, 2000, master_seed=0, cap=5)
        assert sample.n_censored > 0
        assert np.all(sample.tau <= 5)

    def test_occupation_independent_of_workers(self):
        law = ParamLaw.mixture([(0.5, 0.5), (1.5, 0.5)])
        edges = refined_edges(64)
        serial = occupation_histogram(law, edges, 40_000, 7, n_streams=4, burn_in=100, workers=1)
        parallel = occupation_histogram(law, edges, 40_000, 7, n_streams=4, burn_in=100, workers=2)
        assert np.array_equal(serial, parallel)
        assert serial.sum() == 40_000

    def test_occupation_mean_of_constant(self):
        assert occupation_mean(ParamLaw.delta(0.5), Observable.constant(2.0), 10_000, 0) == pytest.approx(2.0)

    def test_kac_prediction(self):
        report = kac_check(ParamLaw.delta(0.5), 1000, 0, stationary_mass_Y=0.25)
        assert report["kac_prediction"] == 4.0
        assert report["mean_tau"] >= 1.0

    def test_induced_endpoints_in_y(self):
        stream = SeededStream(0, 0, ParamLaw.delta(0.5))
        out = induced_endpoints(stream, np.random.default_rng(0).uniform(0.55, 0.95, 50), 3)
        assert np.all(out >= 0.5)

    def test_lagged_points_match_orbits(self):
        law = ParamLaw.uniform(0.5, 1.5)
        x0s = np.array([0.1, 0.7])
        points = lagged_points(SeededStream(0, 0, law), x0s, np.array([0, 3, 5]))
        stream = SeededStream(0, 0, law)
        first = run_orbit(0.1, stream, 5)
        second = run_orbit(0.7, stream, 5)
        assert np.allclose(points[0], first[[0, 3, 5]])
        assert np.allclose(points[1], second[[0, 3, 5]])
