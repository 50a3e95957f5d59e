"""Tests for numerical and I/O helpers."""

import json

import numpy as np
import pandas as pd
import pytest
from scipy import sparse

from lsvlab.errors import NonConvergenceError
from lsvlab.utils.cache import OperatorCache, cached_build
from lsvlab.utils.ensemble import run_tasks, stream_chunks, sum_arrays
from lsvlab.utils.grids import cell_integrals, coarsen, decade_agreement, decade_bins, graded_edges, refined_edges
from lsvlab.utils.io import config_hash, write_json, write_table
from lsvlab.utils.markov import check_row_stochastic, push, stationary_vector, total_variation_distance
from lsvlab.utils.stats import (
    hill_bootstrap,
    hill_estimates,
    integer_grid,
    ks_normal,
    ks_shape,
    loglinear_fit,
    loglog_fit,
    robust_standardize,
    slope_window,
    survival_counts,
    tail_constant,
)


def square(x):
    return x * x


class TestStats:
    def test_loglog_slope(self):
        x = np.arange(1, 101, dtype=float)
        fit = loglog_fit(x, 3.0 * x ** -1.5)
        assert fit.slope == pytest.approx(-1.5)
        assert fit.r_value == pytest.approx(-1.0)

    def test_loglog_window_and_floor(self):
        x = np.arange(1, 101, dtype=float)
        y = x ** -2.0
        fit = loglog_fit(x, y, lo=10, hi=50, floor=1e-3)
        assert fit.lo == 10
        assert fit.hi == 31
        assert loglog_fit(x, y, floor=1.0) is None

    def test_slope_window_is_last_decade(self):
        assert slope_window(10_000) == (1000.0, 10_000.0)
        assert slope_window(5) == (1.0, 5.0)

    def test_loglinear_rate(self):
        t = np.arange(50, dtype=float)
        fit = loglinear_fit(t, np.exp(-0.2 * t))
        assert fit.slope == pytest.approx(-0.2)

    def test_integer_grid(self):
        grid = integer_grid(1000)
        assert grid[0] == 0
        assert grid[1] == 1
        assert grid[-1] == 1000
        assert np.all(np.diff(grid) > 0)

    def test_survival_counts(self):
        samples = np.array([1, 2, 2, 5])
        assert survival_counts(samples, np.array([0, 1, 2, 5])).tolist() == [4, 3, 1, 0]

    def test_hill_on_pareto(self):
        rng = np.random.default_rng(0)
        x = (1.0 - rng.random(50_000)) ** (-1.0 / 1.5)
        index = hill_estimates(x, [1000])[0]
        assert index == pytest.approx(1.5, abs=0.15)
        lo, hi = hill_bootstrap(x, 1000, resamples=50, rng=np.random.default_rng(1))
        assert lo < hi
        assert lo == pytest.approx(1.5, abs=0.3)
        assert hi == pytest.approx(1.5, abs=0.3)
        assert tail_constant(x, 1000, index) == pytest.approx(1.0, rel=0.5)

    def test_hill_out_of_range_is_nan(self):
        assert np.isnan(hill_estimates(np.array([1.0, 2.0, 3.0]), [5])[0])

    def test_ks_normal(self):
        rng = np.random.default_rng(2)
        assert ks_normal(rng.normal(size=5000)) < 0.03
        assert ks_normal(rng.pareto(1.2, size=5000)) > 0.2
        assert ks_normal(np.ones(10)) == 1.0

    def test_ks_shape_ignores_location_and_scale(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=4000)
        b = 5.0 + 3.0 * rng.normal(size=4000)
        assert ks_shape(a, b) < 0.06

    def test_robust_standardize(self):
        z = robust_standardize(np.array([0.0, 1.0, 2.0, 3.0, 4.0]))
        assert z[2] == 0.0
        assert z[4] - z[0] == pytest.approx(2.0)


class TestMarkov:
    def test_total_variation(self):
        assert total_variation_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert total_variation_distance([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_push_dense_and_sparse(self):
        matrix = np.array([[0.9, 0.1], [0.5, 0.5]])
        v = np.array([0.3, 0.7])
        assert np.allclose(push(v, matrix), push(v, sparse.csr_matrix(matrix)))

    def test_two_state_stationary(self):
        matrix = np.array([[0.9, 0.1], [0.5, 0.5]])
        v, residual, _ = stationary_vector(matrix)
        assert np.allclose(v, [5.0 / 6.0, 1.0 / 6.0])
        assert residual <= 1e-10

    def test_power_iteration_without_warm_start(self):
        matrix = sparse.csr_matrix(np.array([[0.9, 0.1], [0.5, 0.5]]))
        v, _, iterations = stationary_vector(matrix, warm_start=False)
        assert np.allclose(v, [5.0 / 6.0, 1.0 / 6.0])
        assert iterations > 0

    def test_periodic_chain_does_not_converge(self):
        flip = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(NonConvergenceError) as info:
            stationary_vector(flip, max_iter=50, initial=np.array([1.0, 0.0]))
        assert info.value.iterations == 50

    def test_row_check(self):
        matrix = np.array([[0.5, 0.5], [0.2, 0.7]])
        assert check_row_stochastic(matrix, 1e-8).tolist() == [1]


class TestGrids:
    def test_refined_edges(self):
        edges = refined_edges(8)
        assert len(edges) == 9
        assert edges[0] == 0.0
        assert edges[4] == 0.5
        assert edges[-1] == 1.0
        assert edges[1] == pytest.approx(0.5 / 16)

    def test_refined_edges_needs_even(self):
        with pytest.raises(ValueError):
            refined_edges(7)

    def test_graded_edges_layout(self):
        edges = graded_edges(2048)
        assert len(edges) == 2049
        assert np.all(np.diff(edges) > 0)
        assert edges[0] == 0.0
        assert edges[1] == pytest.approx(1e-12)
        assert edges[1024] == 0.5
        assert edges[-1] == 1.0
        assert np.allclose(np.diff(edges[1024:]), 0.5 / 1024)

    def test_graded_edges_relative_widths(self):
        edges = graded_edges(2048)
        left = edges[1:1025]
        relative = np.diff(left) / left[:-1]
        # geometric run and quadratic body meet without a jump
        assert relative.max() < 0.1
        assert relative[:255].max() == pytest.approx(relative[:255].min(), rel=1e-6)

    def test_graded_edges_deeper_floor(self):
        edges = graded_edges(256, floor=1e-8)
        assert edges[1] == pytest.approx(1e-8)
        assert np.all(np.diff(edges) > 0)

    def test_graded_edges_rejects_bad_input(self):
        with pytest.raises(ValueError):
            graded_edges(7)
        with pytest.raises(ValueError):
            graded_edges(64, floor=0.1)

    def test_cell_integrals_exact_for_polynomials(self):
        edges = refined_edges(16)
        integrals = cell_integrals(lambda x: x ** 3, edges)
        assert integrals.sum() == pytest.approx(0.25, abs=1e-14)

    def test_coarsen_preserves_mass(self):
        edges = refined_edges(64)
        masses = np.diff(edges)
        bins = np.array([0.0, 0.25, 1.0])
        assert np.allclose(coarsen(edges, masses, bins), [0.25, 0.75])

    def test_decade_bins(self):
        assert np.allclose(decade_bins(1e-3, 1.0), [1e-3, 1e-2, 1e-1, 1.0])

    def test_decade_agreement_exact(self):
        edges = refined_edges(64)
        masses = np.diff(edges)
        _, expected, observed, rel = decade_agreement(edges, masses, masses * 1e6)
        assert np.allclose(expected, observed)
        assert rel.max() < 1e-12


class TestEnsemble:
    def test_stream_chunks(self):
        assert stream_chunks(130, 64) == [(0, 64), (64, 128), (128, 130)]
        assert stream_chunks(0) == []

    def test_run_tasks_order(self):
        assert run_tasks(square, [1, 2, 3]) == [1, 4, 9]
        assert run_tasks(square, [1, 2, 3], workers=2) == [1, 4, 9]

    def test_sum_arrays(self):
        assert sum_arrays([np.ones(2), 2 * np.ones(2)]).tolist() == [3.0, 3.0]


class TestIO:
    def test_write_json_sorted(self, tmp_path):
        digest = write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": np.arange(2), "c": float("nan")})
        payload = json.loads((tmp_path / "a.json").read_text())
        assert payload == {"a": [0, 1], "b": 1.5, "c": None}
        assert list(payload) == ["a", "b", "c"]
        assert len(digest) == 64

    def test_write_json_deterministic(self, tmp_path):
        a = write_json(tmp_path / "a.json", {"x": 1, "y": [1.0, 2.0]})
        b = write_json(tmp_path / "b.json", {"y": [1.0, 2.0], "x": 1})
        assert a == b

    def test_write_table_sidecar(self, tmp_path):
        frame = pd.DataFrame({"n": [1, 2], "survival": [0.5, 0.25]})
        write_table(tmp_path / "tails.csv", frame, units={"n": "steps"}, provenance={"seed": 1})
        meta = json.loads((tmp_path / "tails.meta.json").read_text())
        assert meta["rows"] == 2
        assert meta["columns"][0] == {"name": "n", "unit": "steps"}
        assert meta["provenance"] == {"seed": 1}

    def test_config_hash_ignores_key_order(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestOperatorCache:
    def test_get_or_build(self, tmp_path):
        calls = []

        def build():
            calls.append(1)
            return np.eye(2)

        with OperatorCache(tmp_path / "cache") as cache:
            key = OperatorCache.make_key("ulam", 128)
            first = cached_build(cache, key, build)
            second = cached_build(cache, key, build)
            assert np.array_equal(first, second)
            assert len(calls) == 1
            assert cache.get_stats()["entries"] == 1

    def test_keys_differ(self):
        assert OperatorCache.make_key("ulam", 128) != OperatorCache.make_key("ulam", 256)

    def test_without_cache(self):
        assert cached_build(None, "k", lambda: 3) == 3
