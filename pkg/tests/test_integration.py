import numpy as np
import pytest

import constants as C
from evaluation import make_testset
from network import TrainConfig, model_load, model_save, train_until_verified
from services.cover import AdaptiveParams, build_adaptive_cover_fn, build_grid_cover, majoring_points_from_cover_fn
from services.geometry import Domain
from services.majorant import LookupSurrogate, fc_memory_footprint
from services.oracle import resolve_function


class TestCertificatePipeline:
    @pytest.mark.parametrize("d, eps", [(1, 0.1), (2, 0.25)])
    def test_verified_net_never_under_estimates(self, d, eps, tmp_path):
        # 1. Majoring Points of a smooth non-decreasing function on a grid
        oracle = resolve_function(C.FUNCTION_RAMP, Domain.cube(0.0, 1.0, d))
        points = majoring_points_from_cover_fn(build_grid_cover(oracle.domain, eps), oracle)

        # 2. Train until every Majoring Point is dominated
        cfg = TrainConfig(epochs=500, width=16, depth=2)
        net, report = train_until_verified(points, cfg)
        assert report.passed
        assert report.min_margin >= 0

        # 3. The model file keeps the certificate
        path = tmp_path / "model.json"
        model_save(net, path)
        served = model_load(path)
        assert served.verified

        # 4. f_net >= f_C >= f everywhere on the test set
        testset = make_testset(oracle, 100_000, seed=7)
        fc = LookupSurrogate.from_points(points)(testset.X)
        pred = served.predict(testset.X)
        assert np.all(fc >= testset.y)
        assert np.all(pred >= fc)

    def test_adaptive_points_are_fewer_and_still_sound(self):
        oracle = resolve_function(C.FUNCTION_G2D)
        grid = majoring_points_from_cover_fn(build_grid_cover(oracle.domain, 0.5), oracle)
        adaptive = majoring_points_from_cover_fn(
            build_adaptive_cover_fn(oracle.domain, oracle, AdaptiveParams(0.5, 2.0)), oracle
        )
        assert adaptive.m < grid.m

        testset = make_testset(oracle, 20_000, seed=8)
        for points in (grid, adaptive):
            assert np.all(LookupSurrogate.from_points(points)(testset.X) >= testset.y)

    def test_six_dimensional_stand_in(self):
        oracle = resolve_function(C.FUNCTION_MONO6)
        points = majoring_points_from_cover_fn(build_grid_cover(oracle.domain, 0.5), oracle)
        assert points.m == 64

        net, report = train_until_verified(points, TrainConfig(epochs=500, width=16, depth=2))
        assert report.passed

        testset = make_testset(oracle, 100_000, seed=9)
        assert np.all(net.predict(testset.X) >= testset.y)
        assert fc_memory_footprint(LookupSurrogate.from_points(points), include_domain=False) == 64 * 7
        assert net.layer_sizes[0] == 6


class TestF1Certificate:
    def test_default_training_is_certified(self, f1_certified):
        points, net, report = f1_certified
        assert points.m == 200
        assert report.passed and net.verified
        assert report.violations == 0
        assert np.all(net.predict(points.a) >= points.b)

    def test_no_under_estimation_on_test_set(self, f1_certified, f1_oracle):
        points, net, _ = f1_certified
        testset = make_testset(f1_oracle, 100_000)
        fc = LookupSurrogate.from_points(points)(testset.X)
        pred = net.predict(testset.X)
        assert np.all(fc >= testset.y)
        assert np.all(pred >= fc)
        assert np.sum(pred < testset.y) == 0

    def test_any_lift_stays_within_bound(self, f1_certified):
        points, _, report = f1_certified
        limit = C.DEFAULT_MAX_LIFT_RATIO * (points.b.max() - points.b.min())
        assert all(0.0 <= h["lift"] <= limit for h in report.history)
