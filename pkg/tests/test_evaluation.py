import json

import numpy as np
import pandas as pd
import pytest

import constants as C
from evaluation import (
    TestSet,
    baseline_guarantee,
    delta_baseline_train,
    mae,
    make_testset,
    mean_signed_error,
    monotonicity_probe,
    op_metric,
    rmse,
    run_experiment,
)
from network import TrainConfig
from services.errors import ExperimentSpecError, ExperimentStageError, MajorantError
from services.experiment import experiment_from_dict, load_experiment
from services.geometry import Domain
from services.majorant import LookupSurrogate
from services.oracle import dataset_save, f1_eval, generate_dataset


@pytest.fixture
def linear_testset():
    X = np.linspace(0.0, 1.0, 101).reshape(-1, 1)
    return TestSet(X, X[:, 0].copy())


@pytest.fixture
def small_run():
    return {
        "name": "f1-small",
        "function": C.FUNCTION_F1,
        "points": C.MODE_GRID,
        "cover": {"eps": 1.0},
        "train": {"epochs": 20, "width": 8, "depth": 1, "max_retries": 1},
        "methods": [C.METHOD_FC, C.METHOD_ONN, C.METHOD_BASELINE],
        "deltas": [0, 1],
        "n_test": 2000,
        "probe_pairs": 500,
        "curve_points": 101,
    }


class TestMetrics:
    def test_constant_offset(self, linear_testset):
        shifted = lambda X: X[:, 0] - 0.5
        assert rmse(shifted, linear_testset) == pytest.approx(0.5)
        assert mean_signed_error(shifted, linear_testset) == pytest.approx(-0.5)
        assert op_metric(shifted, linear_testset) == 0.0

    def test_exact_predictor(self, linear_testset):
        exact = lambda X: X[:, 0]
        assert rmse(exact, linear_testset) == 0.0
        assert op_metric(exact, linear_testset) == 100.0

    def test_op_counts_half(self, linear_testset):
        above_middle = lambda X: np.where(X[:, 0] > 0.505, X[:, 0], X[:, 0] - 1.0)
        assert op_metric(above_middle, linear_testset) == pytest.approx(100.0 * 50 / 101)

    def test_empty_testset(self):
        empty = TestSet(np.empty((0, 1)), np.empty(0))
        with pytest.raises(MajorantError):
            rmse(lambda X: X[:, 0], empty)
        with pytest.raises(MajorantError):
            op_metric(lambda X: X[:, 0], empty)

    def test_grid_mae_telescopes(self, f1_grid_points, f1_oracle):
        value = mae(f1_grid_points, f1_oracle)
        assert value == pytest.approx((f1_eval(10.0) - f1_eval(-10.0)) / 200, abs=1e-9)
        assert 0.18 <= value <= 0.30

    def test_testset_is_seeded(self, f1_oracle):
        a = make_testset(f1_oracle, 100, seed=3)
        b = make_testset(f1_oracle, 100, seed=3)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


class TestMonotonicityCheck:
    def test_non_decreasing(self):
        assert monotonicity_probe(lambda X: X.sum(axis=1), Domain.cube(0.0, 1.0, 2), 1000, seed=0) == 0

    def test_decreasing(self):
        count = monotonicity_probe(lambda X: -X[:, 0], Domain((0.0,), (1.0,)), 1000, seed=0)
        assert count > 900

    def test_invalid_pairs(self):
        with pytest.raises(MajorantError):
            monotonicity_probe(lambda X: X[:, 0], Domain((0.0,), (1.0,)), 0)


class TestBaselines:
    def test_guarantee(self, f1_grid_points, f1_oracle):
        assert not baseline_guarantee(f1_grid_points, f1_oracle, 0.0)
        # the largest gap, about 9.7, is the cell starting on the jump at x = 1
        assert baseline_guarantee(f1_grid_points, f1_oracle, 10.0)

    def test_negative_delta(self, f1_grid_points, f1_oracle):
        with pytest.raises(MajorantError):
            delta_baseline_train(f1_grid_points, -1.0, TrainConfig(epochs=1), f1_oracle)

    def test_point_baseline_needs_function(self, f1_grid_points):
        with pytest.raises(MajorantError):
            delta_baseline_train(f1_grid_points, 0.0, TrainConfig(epochs=1))

    def test_large_shift_over_estimates(self, f1_oracle):
        data = generate_dataset(f1_oracle, 100, seed=0)
        cfg = TrainConfig(epochs=30, width=8, depth=1)
        net = delta_baseline_train(data, 1000.0, cfg)
        testset = make_testset(f1_oracle, 1000, seed=1)
        assert op_metric(net.predict, testset) == 100.0
        assert net.parameter_count() == 8 + 8 + 8 + 1

    @pytest.mark.parametrize("delta, low, high", [(0.0, 40.0, 65.0), (0.5, 98.0, 100.0)])
    def test_over_estimation_share_of_shifted_targets(self, f1_grid_points, f1_oracle, delta, low, high):
        net = delta_baseline_train(f1_grid_points, delta, TrainConfig(), f1_oracle)
        testset = make_testset(f1_oracle)
        assert low <= op_metric(net.predict, testset) <= high
        # no finite shift below the largest jump makes the baseline sound on the points
        assert not baseline_guarantee(f1_grid_points, f1_oracle, delta)


class TestRunExperiment:
    def test_rows_and_files(self, small_run, tmp_path):
        table = run_experiment(experiment_from_dict(small_run), tmp_path)
        assert list(table.columns) == C.METRICS_COLUMNS
        assert table["method"].tolist() == ["fc", "onn-gmp", "baseline-0", "baseline-1"]

        fc = table.iloc[0]
        assert fc["m"] == 20
        assert fc["op_percent"] == 100.0
        assert bool(fc["fg"])
        assert fc["memory_floats"] == 42
        assert fc["monotonicity_violations"] == 0
        assert fc["mae"] == pytest.approx((f1_eval(10.0) - f1_eval(-10.0)) / 20)

        assert table.iloc[1]["memory_floats"] == 25
        assert table.iloc[1]["monotonicity_violations"] == 0
        assert table["mae"].tolist()[2:] == [0.0, 1.0]
        assert not table.iloc[2]["baseline_guarantee"]

        for name in ("metrics.csv", "cells_f1-small.json", "model_f1-small.json", "curve_f1-small.csv"):
            assert (tmp_path / name).exists()
        curve = pd.read_csv(tmp_path / "curve_f1-small.csv")
        assert len(curve) == 101
        assert list(curve.columns) == ["x", C.COL_TARGET, "fc", "onn-gmp", "baseline-0", "baseline-1"]
        assert np.all(curve["fc"] >= curve[C.COL_TARGET])

    def test_deterministic(self, small_run, tmp_path):
        first = run_experiment(experiment_from_dict(small_run), tmp_path / "a")
        second = run_experiment(experiment_from_dict(small_run), tmp_path / "b")
        pd.testing.assert_frame_equal(first, second)

    def test_data_mode_scores_covered_points(self, tmp_path):
        spec = experiment_from_dict(
            {
                "name": "f1-data",
                "function": C.FUNCTION_F1,
                "points": C.MODE_DATA,
                "data": {"n": 200, "seed": 0},
                "cover": {"eps": 0.5, "eps_f": 2.0},
                "methods": [C.METHOD_FC],
                "n_test": 2000,
                "probe_pairs": 200,
            }
        )
        table = run_experiment(spec, tmp_path)
        fc = table.iloc[0]
        assert fc["op_percent"] == 100.0
        # cells above the last record have no finite value
        assert not bool(fc["fg"])

    def test_stage_error_names_stage(self, tmp_path):
        spec = experiment_from_dict(
            {"name": "missing", "dataset": "missing.csv", "domain": [[0, 1]], "points": "data", "methods": ["fc"]},
            tmp_path,
        )
        with pytest.raises(ExperimentStageError) as excinfo:
            run_experiment(spec, tmp_path)
        assert excinfo.value.stage == C.STAGE_DATA

    def test_runs_from_file(self, small_run, tmp_path):
        small_run["methods"] = [C.METHOD_FC]
        small_run["output_dir"] = "out"
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(small_run))
        table = run_experiment(path)
        assert (tmp_path / "out" / "metrics.csv").exists()
        assert len(table) == 1

    def test_data_only_baseline_has_no_mae(self, two_record_data, tmp_path):
        dataset_save(two_record_data, tmp_path / "d.csv")
        spec = experiment_from_dict(
            {
                "name": "records",
                "dataset": "d.csv",
                "domain": [[0, 1]],
                "points": "data",
                "train": {"epochs": 10, "width": 4, "depth": 1},
                "methods": [C.METHOD_BASELINE],
                "deltas": [0, 0.5],
                "probe_pairs": 100,
                "curve_points": 11,
            },
            tmp_path,
        )
        table = run_experiment(spec, tmp_path)
        assert table["method"].tolist() == ["baseline-0", "baseline-0.5"]
        assert table["mae"].isna().all()
        assert table["baseline_guarantee"].isna().all()


class TestCertifiedOrdering:
    def test_net_is_no_tighter_than_lookup(self, f1_certified, f1_oracle):
        points, net, _ = f1_certified
        testset = make_testset(f1_oracle)
        fc = LookupSurrogate.from_points(points)
        assert rmse(net.predict, testset) >= rmse(fc.evaluate_batch, testset) - 0.02
        assert op_metric(net.predict, testset) == 100.0


class TestExperimentSpec:
    def test_defaults(self, small_run):
        spec = experiment_from_dict(small_run)
        assert spec.domain == Domain((-10.0,), (10.0,))
        assert spec.label == "onn-gmp"
        assert spec.train.grow.max_retries == 1
        assert not spec.uses_data

    def test_missing_points(self):
        with pytest.raises(ExperimentSpecError, match="points"):
            experiment_from_dict({"name": "x", "function": "f1"})

    def test_unknown_key(self, small_run):
        small_run["colour"] = "blue"
        with pytest.raises(ExperimentSpecError):
            experiment_from_dict(small_run)

    def test_unknown_function(self, small_run):
        small_run["function"] = "nope"
        with pytest.raises(ExperimentSpecError, match="nope"):
            experiment_from_dict(small_run)

    def test_baseline_needs_deltas(self, small_run):
        del small_run["deltas"]
        with pytest.raises(ExperimentSpecError, match="deltas"):
            experiment_from_dict(small_run)

    def test_function_points_need_function(self):
        payload = {"name": "x", "dataset": "d.csv", "domain": [[0, 1]], "points": "function", "methods": ["fc"]}
        with pytest.raises(ExperimentSpecError):
            experiment_from_dict(payload)

    def test_bad_train_values(self, small_run):
        small_run["train"]["optimizer"] = "rmsprop"
        with pytest.raises(ExperimentSpecError):
            experiment_from_dict(small_run)

    def test_lift_ratio(self, small_run):
        small_run["train"]["max_lift_ratio"] = 0
        assert experiment_from_dict(small_run).train.grow.max_lift_ratio == 0.0
        small_run["train"]["max_lift_ratio"] = -1
        with pytest.raises(ExperimentSpecError):
            experiment_from_dict(small_run)

    def test_relative_dataset_path(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"name": "x", "dataset": "d.csv", "domain": [[0, 1]], "points": "data", "methods": ["fc"]}))
        spec = load_experiment(path)
        assert spec.dataset == str(tmp_path / "d.csv")
        assert spec.uses_data
        assert spec.label == "onn-dmp"

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text("{")
        with pytest.raises(ExperimentSpecError):
            load_experiment(path)
