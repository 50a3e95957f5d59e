"""Tests for Pydantic data models."""

import math
import pickle

import numpy as np
import pytest
from pydantic import ValidationError

from lsvlab.models import (
    ChainGeometry,
    DensityVector,
    ExperimentConfig,
    ExperimentKind,
    HitTarget,
    InducedRecord,
    Interval,
    LawKind,
    MapParameter,
    NormalizationPlan,
    Observable,
    ParamLaw,
    PowerLawKernel,
    Regime,
    RunManifest,
    Settings,
)


class TestMapParameter:
    def test_positive(self):
        assert MapParameter(omega=0.5).omega == 0.5
        with pytest.raises(ValidationError):
            MapParameter(omega=0.0)

    def test_frozen(self):
        param = MapParameter(omega=1.0)
        with pytest.raises(ValidationError):
            param.omega = 2.0


class TestInterval:
    def test_width(self):
        assert Interval(lo=0.6, hi=0.9).width == pytest.approx(0.3)

    def test_contains_endpoints(self):
        interval = Interval(lo=0.5, hi=0.75)
        assert interval.contains(0.5)
        assert interval.contains(0.75)
        assert not interval.contains(0.8)

    def test_order(self):
        with pytest.raises(ValidationError):
            Interval(lo=0.7, hi=0.7)

    def test_unit_interval(self):
        with pytest.raises(ValidationError):
            Interval(lo=0.5, hi=1.5)


class TestParamLaw:
    def test_delta_window(self):
        window = ParamLaw.delta(0.75).window
        assert window.alpha == window.beta == 0.75
        assert window.bounded

    def test_mixture_window(self):
        law = ParamLaw.mixture([(1.5, 0.25), (0.5, 0.75)])
        assert law.kind == LawKind.ATOMIC
        assert (law.window.alpha, law.window.beta) == (0.5, 1.5)

    def test_powerlaw_unbounded(self):
        window = ParamLaw.powerlaw(0.5, 1.0).window
        assert window.beta == math.inf
        assert not window.bounded

    def test_weights_sum_to_one(self):
        with pytest.raises(ValidationError):
            ParamLaw.mixture([(0.5, 0.5), (1.0, 0.4)])

    def test_uniform_order(self):
        with pytest.raises(ValidationError):
            ParamLaw.uniform(1.0, 1.0)

    def test_powerlaw_needs_epsilon(self):
        with pytest.raises(ValidationError):
            ParamLaw(kind="powerlaw", alpha=0.5)

    def test_labels(self):
        assert ParamLaw.delta(0.75).label == "delta(0.75)"
        assert ParamLaw.uniform(0.5, 1.5).label == "uniform(0.5, 1.5)"
        assert ParamLaw.mixture([(0.5, 0.5), (1.5, 0.5)]).label == "mixture(0.5:0.5, 1.5:0.5)"
        assert ParamLaw.powerlaw(0.5, 2.0).label == "powerlaw(0.5, 2)"

    def test_hashable(self):
        assert len({ParamLaw.delta(0.5), ParamLaw.delta(0.5)}) == 1


class TestObservable:
    def test_constant(self):
        phi = Observable.constant(2.0)
        assert np.all(phi(np.array([0.0, 0.3, 1.0])) == 2.0)
        assert phi.value_at_zero == 2.0
        assert phi.lip == 0.0

    def test_polynomial(self):
        phi = Observable.polynomial([1.0, -2.0, 3.0])
        assert float(phi(0.5)) == pytest.approx(0.75)
        assert phi.lip == pytest.approx(8.0)
        assert phi.is_polynomial

    def test_from_function(self):
        phi = Observable.from_function(np.sin, lip=1.0, name="sin")
        assert not phi.is_polynomial
        assert phi.value_at_zero == 0.0
        with pytest.raises(ValueError):
            phi.coefficient_array()

    def test_negated(self):
        phi = Observable.polynomial([1.0, 1.0]).negated()
        assert phi.coefficients == (-1.0, -1.0)
        func = Observable.from_function(lambda x: 1.0 + x, lip=1.0).negated()
        assert func(np.array([1.0]))[0] == -2.0

    def test_negated_function_pickles(self):
        phi = Observable.from_function(np.cos, lip=1.0, name="cos").negated()
        restored = pickle.loads(pickle.dumps(phi))
        assert restored.name == "-(cos)"
        assert restored(np.array([0.0]))[0] == -1.0
        assert restored.negated()(np.array([0.0]))[0] == 1.0

    def test_needs_exactly_one_form(self):
        with pytest.raises(ValueError):
            Observable()
        with pytest.raises(ValueError):
            Observable(coefficients=(1.0,), func=np.sin)


class TestInducedRecord:
    def test_completed_returns_to_y(self):
        with pytest.raises(ValidationError):
            InducedRecord(tau=3, birkhoff=3.0, x_entry=0.7, x_return=0.2)

    def test_censored_may_end_anywhere(self):
        record = InducedRecord(tau=10, birkhoff=10.0, x_entry=0.7, x_return=0.01, censored=True)
        assert record.censored

    def test_entry_in_y(self):
        with pytest.raises(ValidationError):
            InducedRecord(tau=1, birkhoff=1.0, x_entry=0.3, x_return=0.6)


class TestChainModels:
    def test_kernel_alpha_below_one(self):
        with pytest.raises(ValidationError):
            PowerLawKernel(alpha=1.0, epsilon=1.0)
        assert PowerLawKernel(alpha=0.5, epsilon=1.0).as_law() == ParamLaw.powerlaw(0.5, 1.0)

    def test_geometry_validator(self):
        with pytest.raises(ValidationError):
            ChainGeometry(
                alpha=0.5,
                b=0.3,
                C=Interval(lo=0.2, hi=0.3),
                W=Interval(lo=0.3, hi=0.65),
                H=Interval(lo=0.5, hi=0.65),
            )

    def test_hit_targets(self):
        assert [t.value for t in HitTarget] == ["tau_C", "tau_H", "tau_W", "tau_W_to_H"]

    def test_density_vector(self):
        edges = np.array([0.0, 0.25, 0.5, 1.0])
        rho = DensityVector.from_masses(edges, [0.25, 0.25, 0.5])
        assert np.allclose(rho.values, [1.0, 1.0, 1.0])
        assert rho.mass == pytest.approx(1.0)
        assert DensityVector.uniform(edges).mass == pytest.approx(1.0)


class TestNormalizationPlan:
    def test_stable_scale(self):
        plan = NormalizationPlan(alpha_eff=0.75, p=4 / 3, regime=Regime.STABLE, n=100, B_n=1.0, A_n=0.0, c=2.0, sample_mean=1.0)
        assert plan.scale_at(50) == pytest.approx(100.0 ** 0.75)

    def test_gaussian_scale(self):
        plan = NormalizationPlan(alpha_eff=0.3, p=10 / 3, regime=Regime.GAUSSIAN, n=100, B_n=1.0, A_n=0.0, c=3.0, sample_mean=1.0)
        assert plan.scale_at(25) == pytest.approx(15.0)


class TestExperimentConfig:
    def test_defaults(self):
        config = ExperimentConfig(kind=ExperimentKind.TAILS, law=ParamLaw.delta(0.75))
        assert config.master_seed == 0
        assert config.phi == [1.0]
        assert config.settings == Settings()
        assert config.sizes.cap == 100_000_000

    def test_scalar_phi(self):
        config = ExperimentConfig(kind="limits", law=ParamLaw.delta(0.75), phi=2)
        assert config.phi == [2.0]
        assert config.observable().value_at_zero == 2.0

    def test_psi_falls_back_to_phi(self):
        config = ExperimentConfig(kind="correlations", law=ParamLaw.delta(0.5), phi=[0.0, 1.0])
        assert config.observable("psi").coefficients == (0.0, 1.0)

    def test_seed_range(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(kind="tails", law=ParamLaw.delta(0.75), master_seed=-1)

    def test_workers_positive(self):
        with pytest.raises(ValidationError):
            Settings(workers=0)


class TestRunManifest:
    def test_defaults(self):
        manifest = RunManifest(kind=ExperimentKind.ULAM, config={}, version="0.1.0")
        assert manifest.status == "ok"
        assert manifest.exit_code == 0
        assert manifest.outputs == {}
