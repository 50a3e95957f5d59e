"""Tests for the LSV map family."""

import math

import numpy as np
import pytest

from lsvlab.errors import CylinderError, DomainError, EmptyPreimageError
from lsvlab.maps import (
    Branch,
    apply_map,
    apply_map_array,
    compose,
    corollary_bound,
    derivative,
    distortion,
    distortion_bound,
    invert_left_array,
    invert_left_branch,
    invert_right_branch,
    pullback_interval,
    random_cylinder,
)
from lsvlab.models import Interval, MapParameter


class TestApplyMap:
    def test_neutral_fixed_point(self):
        assert apply_map(0.0, 0.7) == 0.0

    def test_left_branch(self):
        assert apply_map(0.25, MapParameter(omega=1.0)) == pytest.approx(0.375, abs=1e-15)

    def test_right_branch_ignores_omega(self):
        assert apply_map(0.75, 2.3) == pytest.approx(0.5, abs=1e-15)

    def test_half_belongs_to_right_branch(self):
        assert apply_map(0.5, 1.0) == 0.0

    def test_rejects_points_outside_unit_interval(self):
        with pytest.raises(DomainError):
            apply_map(1.5, 1.0)
        with pytest.raises(DomainError):
            apply_map(-0.1, 1.0)

    def test_rejects_nonpositive_omega(self):
        with pytest.raises(DomainError):
            apply_map(0.3, 0.0)
        with pytest.raises(DomainError):
            apply_map(0.3, -1.0)

    def test_array_matches_scalar(self):
        xs = np.linspace(0.0, 1.0, 101)
        vectorized = apply_map_array(xs, 0.8)
        scalar = np.array([apply_map(float(x), 0.8) for x in xs])
        assert np.allclose(vectorized, scalar, rtol=0, atol=1e-15)

    def test_branches_strictly_increasing(self):
        rng = np.random.default_rng(1)
        for omega in rng.uniform(0.1, 3.0, size=10):
            left = apply_map_array(np.sort(rng.uniform(0.0, 0.5, 200)), omega)
            right = apply_map_array(np.sort(rng.uniform(0.5, 1.0, 200)), omega)
            assert np.all(np.diff(left) > 0)
            assert np.all(np.diff(right) > 0)

    def test_decreasing_in_omega(self):
        x = 0.3
        values = [apply_map(x, omega) for omega in (0.25, 0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_orbit_stays_in_unit_interval(self):
        xs = np.linspace(0.0, 1.0, 1001)
        for omega in (0.3, 1.0, 5.0):
            assert np.all((apply_map_array(xs, omega) >= 0) & (apply_map_array(xs, omega) <= 1))


class TestInverse:
    def test_zero(self):
        assert invert_left_branch(0.0, 0.9) == 0.0

    def test_known_value(self):
        assert invert_left_branch(0.375, 1.0) == pytest.approx(0.25, abs=1e-14)

    def test_golden_preimage(self):
        # root of x(1 + 2x) = 1/2
        assert invert_left_branch(0.5, 1.0) == pytest.approx((math.sqrt(5.0) - 1.0) / 4.0, abs=1e-14)

    def test_forward_check(self):
        x = invert_left_branch(0.5, 0.5)
        assert x * (1.0 + math.sqrt(2.0 * x)) == pytest.approx(0.5, abs=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        xs = rng.uniform(0.0, 0.5, 500)
        omegas = rng.uniform(0.2, 3.0, 500)
        back = invert_left_array(apply_map_array(xs, omegas), omegas)
        assert np.max(np.abs(back - xs)) < 1e-12

    def test_rejects_values_outside_left_range(self):
        with pytest.raises(DomainError):
            invert_left_branch(1.0, 1.0)
        with pytest.raises(DomainError):
            invert_left_branch(-0.1, 1.0)

    def test_right_inverse(self):
        assert invert_right_branch(0.6) == pytest.approx(0.8)


class TestDerivative:
    def test_neutral_point(self):
        assert derivative(0.0, 0.7) == 1.0

    def test_left_branch(self):
        assert derivative(0.25, 1.0) == pytest.approx(2.0)

    def test_right_branch(self):
        assert derivative(0.9, 5.0) == 2.0

    def test_half_uses_right_branch_unless_asked(self):
        assert derivative(0.5, 1.0) == 2.0
        assert derivative(0.5, 1.0, left_limit=True) == pytest.approx(3.0)


class TestPullback:
    def test_empty_composition(self):
        J = pullback_interval([], Interval(lo=0.6, hi=0.9), [])
        assert (J.lo, J.hi) == (0.6, 0.9)

    def test_right_branch(self):
        J = pullback_interval([MapParameter(omega=1.0)], Interval(lo=0.6, hi=0.9), [Branch.RIGHT])
        assert J.lo == pytest.approx(0.8)
        assert J.hi == pytest.approx(0.95)

    def test_left_branch(self):
        J = pullback_interval([1.0], Interval(lo=0.6, hi=0.9), ["left"])
        assert J.lo == pytest.approx(invert_left_branch(0.6, 1.0))
        assert J.hi == pytest.approx(invert_left_branch(0.9, 1.0))

    def test_maps_onto_target(self):
        params = [0.7, 1.2, 0.9]
        target = Interval(lo=0.55, hi=0.8)
        J = pullback_interval(params, target, ["left", "right", "left"])
        assert compose(params, J.lo) == pytest.approx(target.lo, abs=1e-10)
        assert compose(params, J.hi) == pytest.approx(target.hi, abs=1e-10)

    def test_left_branch_cannot_reach_one(self):
        with pytest.raises(EmptyPreimageError):
            pullback_interval([1.0], Interval(lo=0.6, hi=1.0), ["left"])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pullback_interval([1.0, 1.0], Interval(lo=0.6, hi=0.9), ["left"])


class TestDistortion:
    def test_no_maps(self):
        assert distortion([], Interval(lo=0.6, hi=0.9)) == 0.0

    def test_single_map_attains_endpoint_ratio(self):
        J = Interval(lo=0.3, hi=0.4)
        expected = math.log(derivative(0.4, 0.8) / derivative(0.3, 0.8))
        assert distortion([0.8], J) == pytest.approx(expected, rel=1e-10)

    def test_shrinking_interval(self):
        assert distortion([0.8], Interval(lo=0.3, hi=0.3 + 1e-9)) < 1e-8

    def test_cylinder_violation(self):
        with pytest.raises(CylinderError):
            distortion([1.0, 1.0], Interval(lo=0.3, hi=0.7))

    def test_bound_on_random_cylinders(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(200):
            n = int(rng.integers(1, 11))
            params, target, branches = random_cylinder(rng, n)
            try:
                J = pullback_interval(params, target, branches)
                dist = distortion(params, J)
            except (CylinderError, EmptyPreimageError):
                continue
            checked += 1
            assert dist <= distortion_bound(params, target) + 1e-9
            assert dist <= corollary_bound(params, J) + 1e-9
        assert checked >= 150

    def test_pullback_of_example_target(self):
        rng = np.random.default_rng(3)
        params = [MapParameter(omega=float(w)) for w in rng.uniform(0.5, 1.5, 12)]
        target = Interval(lo=0.6, hi=0.9)
        J = pullback_interval(params, target, ["left"] * 11 + ["right"])
        beta = max(p.omega for p in params)
        assert distortion(params, J) <= (1.0 + beta) * math.log(0.9 / 0.6) + 1e-9
