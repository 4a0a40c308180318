import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

import constants as C
from network import (
    LossParams,
    MonotoneMlp,
    TrainConfig,
    mlp_init,
    model_save,
    train,
    train_until_verified,
)
from services.cover import (
    Cover,
    MajoringPointSet,
    build_adaptive_cover_data,
    build_adaptive_cover_fn,
    build_grid_cover,
    majoring_points_from_cover_data,
    majoring_points_from_cover_fn,
)
from services.errors import (
    ExperimentStageError,
    MajorantError,
    VerificationFailedError,
)
from services.experiment import ExperimentSpec, load_experiment
from services.geometry import Domain
from services.majorant import LookupSurrogate, fc_memory_footprint
from services.oracle import (
    Dataset,
    FunctionOracle,
    dataset_load,
    generate_dataset,
    resolve_function,
    sample_uniform,
)

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass
class TestSet:
    X: np.ndarray
    y: np.ndarray
    seed: int | None = None

    # keeps pytest from collecting this class
    __test__ = False

    @property
    def n(self) -> int:
        return int(self.y.shape[0])


@dataclass
class MetricsReport:
    method: str
    m: int
    n_test: int
    seed: int | None
    mae: float | None
    rmse: float
    mean_signed_error: float
    op_percent: float
    fg: bool
    memory_floats: int
    monotonicity_violations: int
    baseline_guarantee: bool | None = None

    def to_row(self) -> dict:
        return asdict(self)


def make_testset(oracle: FunctionOracle, n: int = C.DEFAULT_N_TEST, seed: int = C.DEFAULT_TEST_SEED) -> TestSet:
    X = sample_uniform(oracle.domain, n, seed)
    return TestSet(X, oracle.evaluate_batch(X), seed)


# ---------------------------------------------------------
# METRICS
# ---------------------------------------------------------


def mae(points: MajoringPointSet, oracle: FunctionOracle) -> float:
    """Mean Majoring margin (1/m) sum (b_i - f(a_i))."""
    return float(np.mean(points.b - oracle.evaluate_batch(points.a)))


def _residuals(predict: Predictor, testset: TestSet) -> np.ndarray:
    if testset.n < 1:
        raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail="empty test set"))
    return np.asarray(predict(testset.X), dtype=np.float64) - testset.y


def rmse(predict: Predictor, testset: TestSet) -> float:
    r = _residuals(predict, testset)
    return float(np.sqrt(np.mean(r * r)))


def mean_signed_error(predict: Predictor, testset: TestSet) -> float:
    return float(np.mean(_residuals(predict, testset)))


def op_metric(predict: Predictor, testset: TestSet) -> float:
    """Percentage of test points where the prediction is >= the truth."""
    pred = np.asarray(predict(testset.X), dtype=np.float64)
    if testset.n < 1:
        raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail="empty test set"))
    return 100.0 * np.count_nonzero(pred >= testset.y) / testset.n


def monotonicity_probe(predict: Predictor, domain: Domain, n_pairs: int = C.DEFAULT_PROBE_PAIRS, seed: int = C.DEFAULT_TEST_SEED) -> int:
    """
    Counts ordered pairs x <= x' (x uniform, x' = x plus a random non-negative
    offset clipped to the box) with predict(x) > predict(x').
    """
    if n_pairs < 1:
        raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"n_pairs must be >= 1, got {n_pairs}"))
    rng = np.random.default_rng(seed)
    X = sample_uniform(domain, n_pairs, int(rng.integers(2**31)))
    step = rng.random((n_pairs, domain.d)) * rng.random((n_pairs, 1)) * domain.span
    X_up = np.minimum(X + step, domain.upper)
    return int(np.count_nonzero(predict(X) > predict(X_up)))


# ---------------------------------------------------------
# DELTA BASELINES
# ---------------------------------------------------------


def delta_baseline_train(
    source: MajoringPointSet | Dataset,
    delta: float,
    cfg: TrainConfig,
    oracle: FunctionOracle | None = None,
) -> MonotoneMlp:
    """
    Same architecture, symmetric l2 loss, targets shifted up by delta, no
    weight projection and no verification.

    `source` is a dataset (targets v_i + delta) or a Majoring Point set whose
    inputs are relabelled with the oracle (targets f(a_i) + delta).
    """
    if delta < 0:
        raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"delta must be >= 0, got {delta}"))
    if isinstance(source, Dataset):
        X, y, domain = source.X, source.v, source.domain
    else:
        if oracle is None:
            raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail="a point-based baseline needs the function"))
        X, y = source.a, oracle.evaluate_batch(source.a)
        domain = source.domain or oracle.domain
    targets = y + delta
    net = mlp_init(X.shape[1], cfg.depth, cfg.width, cfg.theta, cfg.seed, domain, targets)
    logger.info(f"Training {delta:g}-baseline on {X.shape[0]} points")
    train(net, (X, targets), cfg, loss=LossParams.squared(), project=False)
    return net


def baseline_guarantee(points: MajoringPointSet, oracle: FunctionOracle, delta: float) -> bool:
    """True iff f(a_i) + delta >= b_i for every Majoring Point."""
    return bool(np.all(oracle.evaluate_batch(points.a) + delta >= points.b))


# ---------------------------------------------------------
# EXPERIMENT PIPELINE
# ---------------------------------------------------------


@contextmanager
def _stage(name: str):
    logger.info(f"Stage: {name}")
    try:
        yield
    except ExperimentStageError:
        raise
    except MajorantError as e:
        raise ExperimentStageError(name, e) from e


def build_cover(spec: ExperimentSpec, oracle: FunctionOracle | None, data: Dataset | None) -> Cover:
    if spec.points == C.MODE_GRID:
        return build_grid_cover(spec.domain, spec.params.eps)
    if spec.points == C.MODE_FUNCTION:
        return build_adaptive_cover_fn(spec.domain, oracle, spec.params)
    return build_adaptive_cover_data(spec.domain, data, spec.params)


def _metrics(
    method: str,
    predict: Predictor,
    testset: TestSet,
    spec: ExperimentSpec,
    m: int,
    mae_value: float | None,
    fg: bool,
    memory: int,
    guarantee: bool | None = None,
    probe: Predictor | None = None,
) -> MetricsReport:
    return MetricsReport(
        method=method,
        m=m,
        n_test=testset.n,
        seed=spec.test_seed,
        mae=mae_value,
        rmse=rmse(predict, testset),
        mean_signed_error=mean_signed_error(predict, testset),
        op_percent=op_metric(predict, testset),
        fg=fg,
        memory_floats=memory,
        monotonicity_violations=monotonicity_probe(probe or predict, spec.domain, spec.probe_pairs, spec.test_seed),
        baseline_guarantee=guarantee,
    )


def _masked(surrogate: LookupSurrogate) -> Predictor:
    """f_C with NaN where no finite cell covers the point."""

    def predict(X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], np.nan)
        mask = surrogate.covered(X)
        out[mask] = surrogate.evaluate_batch(X[mask])
        return out

    return predict


def run_experiment(spec: ExperimentSpec | str | Path, output_dir=None) -> pd.DataFrame:
    """
    End-to-end pipeline: data, cover, Majoring Points, then one metrics row
    per method. Writes `metrics.csv`, `cells_<name>.json`, `model_<name>.json`
    and, in 1D, `curve_<name>.csv` into the output directory.

    f_C is scored on the covered test points only; every other method on the
    full test set.

    Raises:
        ExperimentSpecError: invalid spec file.
        ExperimentStageError: a stage failed; carries the stage label.
    """
    if not isinstance(spec, ExperimentSpec):
        spec = load_experiment(spec)
    out = Path(output_dir) if output_dir is not None else spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"Experiment '{spec.name}' -> {out}")

    with _stage(C.STAGE_DATA):
        oracle = resolve_function(spec.function, spec.domain) if spec.function else None
        data = None
        if spec.dataset:
            data = dataset_load(spec.dataset, spec.domain)
        elif spec.data_n:
            data = generate_dataset(oracle, spec.data_n, spec.data_seed)
        testset = make_testset(oracle, spec.n_test, spec.test_seed) if oracle is not None else TestSet(data.X, data.v)

    with _stage(C.STAGE_COVER):
        cover = build_cover(spec, oracle, data)
        logger.info(C.MSG_COVER_BUILT.format(m=cover.m, mode=cover.mode))

    with _stage(C.STAGE_POINTS):
        if spec.uses_data:
            points = majoring_points_from_cover_data(cover, data)
        else:
            points = majoring_points_from_cover_fn(cover, oracle)
        mae_value = mae(points, oracle) if oracle is not None else None
        full_scope = points.dropped == 0

    rows = []
    curves = {}
    net = None

    if C.METHOD_FC in spec.methods:
        with _stage(C.STAGE_METRICS):
            surrogate = LookupSurrogate.from_points(points)
            masked = _masked(surrogate)
            mask = surrogate.covered(testset.X)
            scoped = TestSet(testset.X[mask], testset.y[mask], testset.seed)
            rows.append(
                _metrics(
                    C.METHOD_FC,
                    surrogate.evaluate_batch,
                    scoped,
                    spec,
                    points.m,
                    mae_value,
                    full_scope,
                    fc_memory_footprint(surrogate),
                    probe=masked,
                )
            )
            curves[C.METHOD_FC] = masked

    if C.METHOD_ONN in spec.methods:
        with _stage(C.STAGE_TRAIN):
            try:
                net, report = train_until_verified(points, spec.train)
            except VerificationFailedError as e:
                logger.warning(str(e))
                net, report = e.net, e.report
        with _stage(C.STAGE_METRICS):
            fg = report.passed and full_scope
            rows.append(
                _metrics(spec.label, net.predict, testset, spec, points.m, mae_value, fg, net.parameter_count())
            )
            curves[spec.label] = net.predict

    if C.METHOD_BASELINE in spec.methods:
        source = data if spec.uses_data or oracle is None else points
        m = source.n if isinstance(source, Dataset) else points.m
        for delta in spec.deltas:
            label = f"{C.METHOD_BASELINE}-{delta:g}"
            with _stage(C.STAGE_TRAIN):
                baseline = delta_baseline_train(source, delta, spec.train, oracle)
            with _stage(C.STAGE_METRICS):
                guarantee = baseline_guarantee(points, oracle, delta) if oracle is not None else None
                # MAE of (a_i, f(a_i) + delta) is delta by construction; unknown without f
                baseline_mae = delta if oracle is not None else None
                rows.append(
                    _metrics(
                        label, baseline.predict, testset, spec, m, baseline_mae, False, baseline.parameter_count(), guarantee
                    )
                )
                curves[label] = baseline.predict

    with _stage(C.STAGE_OUTPUT):
        table = pd.DataFrame([r.to_row() for r in rows], columns=C.METRICS_COLUMNS)
        table.to_csv(out / C.METRICS_FILE, index=False, float_format=C.CSV_FLOAT_FORMAT)
        points.cover.save(out / C.CELLS_FILE_TEMPLATE.format(name=spec.name))
        if net is not None:
            model_save(net, out / C.MODEL_FILE_TEMPLATE.format(name=spec.name))
        if spec.domain.d == 1:
            write_curve(out / C.CURVE_FILE_TEMPLATE.format(name=spec.name), spec, oracle, curves)

    return table


def write_curve(path, spec: ExperimentSpec, oracle: FunctionOracle | None, curves: dict[str, Predictor]):
    """Dense 1D sweep: x, f(x) and one column per method."""
    xs = np.linspace(spec.domain.lower[0], spec.domain.upper[0], spec.curve_points)
    xs[-1] = spec.domain.upper[0]
    X = xs.reshape(-1, 1)
    df = pd.DataFrame({"x": xs})
    if oracle is not None:
        df[C.COL_TARGET] = oracle.evaluate_batch(X)
    for label, predict in curves.items():
        df[label] = predict(X)
    df.to_csv(path, index=False, float_format=C.CSV_FLOAT_FORMAT)
