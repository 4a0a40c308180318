import numpy as np

import constants as C
from evaluation import make_testset, mae, op_metric, rmse
from network import TrainConfig, train_until_verified
from services.cover import build_grid_cover, majoring_points_from_cover_fn
from services.errors import VerificationFailedError
from services.majorant import LookupSurrogate, fc_memory_footprint
from services.oracle import resolve_function


def check_certificate():
    oracle = resolve_function(C.FUNCTION_F1)

    print("Building grid Majoring Points...")
    cover = build_grid_cover(oracle.domain, C.DEFAULT_EPS)
    points = majoring_points_from_cover_fn(cover, oracle)
    print(f"✅ {points.m} Majoring Points, MAE {mae(points, oracle):.4f}")

    testset = make_testset(oracle)
    surrogate = LookupSurrogate.from_points(points)
    print(
        f"f_C: RMSE {rmse(surrogate, testset):.4f}, OP {op_metric(surrogate, testset):.2f}%, "
        f"{fc_memory_footprint(surrogate)} floats"
    )

    print("\nTraining monotone network...")
    try:
        net, report = train_until_verified(points, TrainConfig(progress=True))
    except VerificationFailedError as e:
        print(f"❌ {e}")
        return
    print(f"✅ Verified after {len(report.history)} attempt(s), min margin {report.min_margin:.4g}")

    pred = net.predict(testset.X)
    violations = int(np.count_nonzero(pred < testset.y))
    if violations == 0:
        print(f"✅ No under-estimation on {testset.n} test points (RMSE {rmse(net.predict, testset):.4f})")
    else:
        print(f"❌ {violations} test points under-estimated.")


if __name__ == "__main__":
    check_certificate()
