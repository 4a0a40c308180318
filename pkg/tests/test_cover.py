import math
from unittest.mock import patch

import numpy as np
import pytest

import constants as C
from services.cover import (
    AdaptiveParams,
    Cover,
    MajoringPointSet,
    build_adaptive_cover_data,
    build_adaptive_cover_fn,
    build_grid_cover,
    grid_size,
    majoring_points_from_cover_data,
    majoring_points_from_cover_fn,
    max_rounds,
)
from services.errors import CellBudgetExceededError, MajorantError, NoFiniteMajoringPointsError
from services.geometry import Domain
from services.oracle import (
    FunctionOracle,
    f1_printed_eval,
    generate_dataset,
    resolve_function,
    sample_uniform,
    validate_dataset,
)


def assert_covers(cover, n=100_000, seed=0, exactly_one=True):
    X = sample_uniform(cover.domain, n, seed)
    counts = np.zeros(n, dtype=int)
    for lo, hi, closed in zip(cover.lower, cover.upper, cover.closed):
        below_top = (X < hi) | (closed & (X == hi))
        counts += np.all((X >= lo) & below_top, axis=1)
    assert np.all(counts >= 1)
    if exactly_one:
        assert np.all(counts == 1)


class TestGridCover:
    def test_1d_f1_domain(self):
        cover = build_grid_cover(Domain((-10.0,), (10.0,)), 0.1)
        assert cover.m == 200
        assert np.allclose(cover.upper - cover.lower, 0.1)
        assert cover.lower[0, 0] == -10.0
        assert cover.upper[-1, 0] == 10.0

    def test_2d_count(self):
        cover = build_grid_cover(Domain.cube(0.0, 15.0, 2), 0.1)
        assert cover.m == 22_500
        assert grid_size(cover.domain, 0.1) == 150

    def test_eps_larger_than_box(self):
        cover = build_grid_cover(Domain((0.0,), (10.0,)), 20.0)
        assert cover.m == 1
        assert cover.lower[0, 0] == 0.0 and cover.upper[0, 0] == 10.0

    def test_lexicographic_order(self):
        cover = build_grid_cover(Domain.cube(0.0, 1.0, 2), 0.5)
        assert cover.lower.tolist() == [[0.0, 0.0], [0.0, 0.5], [0.5, 0.0], [0.5, 0.5]]

    def test_cell_budget(self):
        with pytest.raises(CellBudgetExceededError):
            build_grid_cover(Domain.cube(0.0, 1.0, 3), 0.01, cell_budget=1000)

    def test_budget_from_environment(self):
        with patch.dict("os.environ", {C.ENV_CELL_BUDGET: "10"}):
            with pytest.raises(CellBudgetExceededError):
                build_grid_cover(Domain.cube(0.0, 1.0, 2), 0.25)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_completeness(self, d):
        assert_covers(build_grid_cover(Domain.cube(-1.0, 2.0, d), 0.5), n=20_000, seed=d)

    def test_covers_top_corner(self):
        cover = build_grid_cover(Domain.cube(0.0, 1.0, 2), 0.3)
        assert len(cover.containing(np.array([1.0, 1.0]))) == 1

    def test_bad_eps(self):
        with pytest.raises(MajorantError):
            build_grid_cover(Domain((0.0,), (1.0,)), 0.0)


class TestAdaptiveCoverFunction:
    def test_constant_oracle_single_cell(self):
        dom = Domain.cube(0.0, 1.0, 2)
        oracle = FunctionOracle(lambda X: np.full(len(X), 3.0), dom)
        cover = build_adaptive_cover_fn(dom, oracle, AdaptiveParams(1e-3, 0.1))
        assert cover.m == 1

    def test_identity_two_cells(self, unit_interval, identity_oracle):
        cover = build_adaptive_cover_fn(unit_interval, identity_oracle, AdaptiveParams(1e-6, 0.6))
        assert cover.m == 2
        assert cover.lower.ravel().tolist() == [0.0, 0.5]
        assert cover.rounds == 1

    def test_every_cell_passes_a_stop_test(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        params = AdaptiveParams(0.5, 1.0)
        cover = build_adaptive_cover_fn(oracle.domain, oracle, params)
        depth_cap = max_rounds(oracle.domain, params.eps)
        for lo, hi, path in zip(cover.lower, cover.upper, cover.paths):
            variation = oracle.evaluate(hi) - oracle.evaluate(lo)
            assert variation <= params.eps_f or np.max(hi - lo) <= params.eps or len(path) >= depth_cap

    def test_termination_and_worst_case_bound(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        for eps in (0.5, 2.0):
            params = AdaptiveParams(eps, 0.5)
            cover = build_adaptive_cover_fn(oracle.domain, oracle, params)
            n_rounds = max_rounds(oracle.domain, eps)
            assert cover.rounds <= n_rounds
            assert cover.m <= 2 ** (oracle.domain.d * n_rounds)

    def test_smaller_eps_f_never_fewer_cells(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        counts = [
            build_adaptive_cover_fn(oracle.domain, oracle, AdaptiveParams(0.5, eps_f)).m
            for eps_f in (8.0, 4.0, 2.0, 1.0, 0.5)
        ]
        assert counts == sorted(counts)

    def test_eps_f_zero_reaches_eps_floor(self):
        dom = Domain.cube(0.0, 1.0, 2)
        oracle = resolve_function(C.FUNCTION_RAMP, dom)
        cover = build_adaptive_cover_fn(dom, oracle, AdaptiveParams(0.1, 0.0))
        assert np.all(np.max(cover.upper - cover.lower, axis=1) <= 0.1)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_completeness(self, d):
        dom = Domain.cube(0.0, 1.0, d)
        cover = build_adaptive_cover_fn(dom, resolve_function(C.FUNCTION_RAMP, dom), AdaptiveParams(0.05, 0.3))
        assert_covers(cover, n=20_000, seed=10 + d)

    def test_2d_economy_against_grid(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        grid = build_grid_cover(oracle.domain, 0.1)
        fine = build_adaptive_cover_fn(oracle.domain, oracle, AdaptiveParams(0.5, 0.5))
        coarse = build_adaptive_cover_fn(oracle.domain, oracle, AdaptiveParams(2.0, 0.5))
        assert grid.m == 22_500
        assert coarse.m < fine.m < grid.m

    def test_budget(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        with pytest.raises(CellBudgetExceededError):
            build_adaptive_cover_fn(oracle.domain, oracle, AdaptiveParams(0.01, 0.0), cell_budget=100)


class TestAdaptiveCoverData:
    def test_empty_dataset_single_cell(self, unit_interval):
        data = validate_dataset(np.empty((0, 1)), [], unit_interval)
        cover = build_adaptive_cover_data(unit_interval, data, AdaptiveParams(1e-3, 0.5, 0))
        assert cover.m == 1

    def test_two_record_regression(self, unit_interval, two_record_data):
        cover = build_adaptive_cover_data(unit_interval, two_record_data, AdaptiveParams(1e-3, 0.5, 0))
        assert cover.m == 20
        assert cover.rounds == 10 == max_rounds(unit_interval, 1e-3)
        assert cover.lower.ravel().tolist() == [
            0.0, 0.0625, 0.09375, 0.09765625, 0.099609375, 0.1005859375, 0.1015625, 0.109375, 0.125, 0.25,
            0.5, 0.75, 0.875, 0.890625, 0.8984375, 0.8994140625, 0.900390625, 0.90234375, 0.90625, 0.9375,
        ]
        assert cover.upper[-1, 0] == 1.0

    def test_completeness_2d(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        data = generate_dataset(oracle, 300, seed=1)
        cover = build_adaptive_cover_data(oracle.domain, data, AdaptiveParams(0.5, 2.0, 2))
        assert_covers(cover, n=20_000, seed=2)

    def test_2d_eps_two_fewer_than_grid(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        data = generate_dataset(oracle, 500, seed=3)
        cover = build_adaptive_cover_data(oracle.domain, data, AdaptiveParams(2.0, 0.5, 0))
        assert 1 < cover.m < 22_500


class TestMajoringPoints:
    def test_single_cell_identity(self, unit_interval, identity_oracle):
        cover = build_grid_cover(unit_interval, 1.0)
        pts = majoring_points_from_cover_fn(cover, identity_oracle)
        assert pts.a.tolist() == [[0.0]]
        assert pts.b.tolist() == [1.0]
        assert pts.source == C.MODE_GRID

    def test_f1_grid_points(self, f1_grid_points):
        assert f1_grid_points.m == 200
        i = int(np.argmin(np.abs(f1_grid_points.a[:, 0] - 0.9)))
        assert f1_grid_points.cover.upper[i, 0] == 1.0
        assert f1_grid_points.b[i] == pytest.approx(1 + math.sin(1))

    def test_printed_f1_value_at_cell_top(self):
        oracle = resolve_function(C.FUNCTION_F1_PRINTED)
        pts = majoring_points_from_cover_fn(build_grid_cover(oracle.domain, 0.1), oracle)
        i = int(np.argmin(np.abs(pts.a[:, 0] - 0.9)))
        assert pts.b[i] == pytest.approx(f1_printed_eval(1.0), rel=1e-12)
        assert pts.b[i] == pytest.approx(-0.15853, abs=1e-5)

    def test_soundness(self, f1_grid_points, f1_oracle):
        assert np.all(f1_grid_points.b >= f1_oracle.evaluate_batch(f1_grid_points.a))

    def test_data_single_cell(self, unit_interval):
        data = validate_dataset([[1.0]], [5.0], unit_interval)
        pts = majoring_points_from_cover_data(build_grid_cover(unit_interval, 1.0), data)
        assert pts.a.tolist() == [[0.0]] and pts.b.tolist() == [5.0]

    def test_data_drops_infinite_cells(self):
        dom = Domain((0.0,), (2.0,))
        data = validate_dataset([[1.0]], [5.0], dom)
        pts = majoring_points_from_cover_data(build_grid_cover(dom, 0.5), data)
        assert pts.m == 2
        assert pts.dropped == 2
        assert pts.uncovered_fraction == 0.5
        assert np.isnan(pts.cover.b[-1])

    def test_data_all_infinite(self):
        dom = Domain((0.0,), (2.0,))
        data = validate_dataset([[0.1]], [5.0], dom)
        with pytest.raises(NoFiniteMajoringPointsError):
            majoring_points_from_cover_data(build_grid_cover(dom, 1.0), data)

    def test_two_record_points_drop_top_cells(self, unit_interval, two_record_data):
        cover = build_adaptive_cover_data(unit_interval, two_record_data, AdaptiveParams(1e-3, 0.5, 0))
        pts = majoring_points_from_cover_data(cover, two_record_data)
        # every cell reaching above the record at 0.9 has no dominating sample
        assert pts.dropped == 5
        assert pts.m == 15
        assert pts.uncovered_fraction == pytest.approx(1 - 0.8994140625)
        assert pts.b.tolist() == [0.1] * 4 + [0.9] * 11

    def test_csv_round_trip(self, tmp_path, f1_grid_points):
        path = tmp_path / "points.csv"
        f1_grid_points.save(path)
        assert path.read_text().splitlines()[:2] == ["# domain -10.0..10.0", "a1,b"]
        loaded = MajoringPointSet.load(path)
        assert np.array_equal(loaded.a, f1_grid_points.a)
        assert np.array_equal(loaded.b, f1_grid_points.b)
        assert loaded.domain == Domain((-10.0,), (10.0,))

    def test_csv_without_domain_header(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("a1,a2,b\n0,0,1\n0.5,0.5,2\n")
        loaded = MajoringPointSet.load(path)
        assert loaded.d == 2 and loaded.m == 2
        assert loaded.domain is None

    def test_csv_domain_header_two_axes(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("# domain 0..15 -1.5..2\na1,a2,b\n0,0,1\n")
        assert MajoringPointSet.load(path).domain == Domain((0.0, -1.5), (15.0, 2.0))

    def test_csv_domain_header_wrong_dimension(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("# domain 0..1\na1,a2,b\n0,0,1\n")
        with pytest.raises(MajorantError):
            MajoringPointSet.load(path)

    def test_csv_bad_domain_header(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("# domain 0-1\na1,b\n0,1\n")
        with pytest.raises(MajorantError):
            MajoringPointSet.load(path)

    def test_cover_json_round_trip(self, tmp_path, f1_grid_points):
        path = tmp_path / "cells.json"
        f1_grid_points.cover.save(path)
        loaded = Cover.load(path)
        assert loaded.m == 200 and loaded.mode == C.MODE_GRID
        assert np.array_equal(loaded.b, f1_grid_points.cover.b)
        assert np.array_equal(loaded.edges[0], f1_grid_points.cover.edges[0])
