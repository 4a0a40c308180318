import logging
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd
from cachetools import LRUCache

import constants as C
from services.errors import (
    DatasetError,
    DimensionMismatchError,
    DomainError,
    MajorantError,
    MonotonicityViolationError,
)
from services.geometry import Domain, as_point, as_points

logger = logging.getLogger(__name__)


# ---------------------------------------------------------
# BENCHMARK FUNCTIONS
# ---------------------------------------------------------


def _piecewise_1d(x, middle_sign: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(~((x >= C.F1_LOWER) & (x <= C.F1_UPPER))):
        bad = x[~((x >= C.F1_LOWER) & (x <= C.F1_UPPER))]
        raise DomainError(C.ERR_MSG_F1_DOMAIN.format(x=bad.ravel()[:1].tolist()))
    return np.select(
        [x < -1.0, x <= 1.0],
        [3.0 * x + 3.0 * np.sin(x) - 4.0, middle_sign * np.sign(x) * x * x + np.sin(x)],
        default=x + np.cos(x) + 10.0,
    )


def f1_batch(x) -> np.ndarray:
    """
    Vectorized piecewise 1D test function on [-10, 10], non-decreasing:

    - 3x + 3 sin(x) - 4        on [-10, -1)
    - sign(x) x^2 + sin(x)     on [-1, 1]    (sign(0) = 0)
    - x + cos(x) + 10          on (1, 10]

    Both joins jump upward.
    """
    return _piecewise_1d(x, 1.0)


def f1_eval(x: float) -> float:
    return float(f1_batch(np.array([x], dtype=np.float64))[0])


def f1_printed_batch(x) -> np.ndarray:
    """
    Same as `f1_batch` with the middle branch written -sign(x) x^2 + sin(x).
    Not monotone: it falls on [-1, -0.4502] and on [0.4502, 1].
    """
    return _piecewise_1d(x, -1.0)


def f1_printed_eval(x: float) -> float:
    return float(f1_printed_batch(np.array([x], dtype=np.float64))[0])


def g2d_batch(X) -> np.ndarray:
    """g(x, y) = f1(sqrt(x^2 + y^2) - 10) on [0, 15]^2, radial argument clamped to [-10, 10]."""
    A = np.asarray(X, dtype=np.float64).reshape(-1, 2)
    outside = ~np.all((A >= C.G2D_LOWER) & (A <= C.G2D_UPPER), axis=1)
    if np.any(outside):
        x, y = A[np.argmax(outside)]
        raise DomainError(C.ERR_MSG_G2D_DOMAIN.format(x=x, y=y))
    radial = np.sqrt(A[:, 0] * A[:, 0] + A[:, 1] * A[:, 1]) - C.G2D_RADIUS_SHIFT
    return f1_batch(np.clip(radial, C.F1_LOWER, C.F1_UPPER))


def g2d_eval(x: float, y: float) -> float:
    return float(g2d_batch(np.array([[x, y]], dtype=np.float64))[0])


def ramp_batch(X) -> np.ndarray:
    A = np.asarray(X, dtype=np.float64)
    return A.reshape(A.shape[0], -1).sum(axis=1)


def monotone_bench_batch(X) -> np.ndarray:
    """
    Smooth non-decreasing benchmark on [0, 1]^d: a weighted ramp plus a
    sigmoid step across the hyperplane sum(x) = d / 2.
    """
    A = np.asarray(X, dtype=np.float64)
    A = A.reshape(A.shape[0], -1)
    d = A.shape[1]
    weights = np.arange(1, d + 1, dtype=np.float64) / d
    total = A.sum(axis=1)
    return A @ weights + np.tanh(C.MONO_STEP_SHARPNESS * (total - d / 2.0))


@dataclass(frozen=True)
class BenchmarkFunction:
    name: str
    batch: Callable[[np.ndarray], np.ndarray]
    domain: Domain | None


FUNCTIONS = {
    C.FUNCTION_F1: BenchmarkFunction(
        C.FUNCTION_F1, lambda X: f1_batch(np.asarray(X).reshape(-1)), Domain((C.F1_LOWER,), (C.F1_UPPER,))
    ),
    C.FUNCTION_F1_PRINTED: BenchmarkFunction(
        C.FUNCTION_F1_PRINTED,
        lambda X: f1_printed_batch(np.asarray(X).reshape(-1)),
        Domain((C.F1_LOWER,), (C.F1_UPPER,)),
    ),
    C.FUNCTION_G2D: BenchmarkFunction(
        C.FUNCTION_G2D, g2d_batch, Domain.cube(C.G2D_LOWER, C.G2D_UPPER, 2)
    ),
    C.FUNCTION_MONO6: BenchmarkFunction(
        C.FUNCTION_MONO6, monotone_bench_batch, Domain.cube(0.0, 1.0, C.MONO6_DIMENSION)
    ),
    # any dimension; the domain comes from the caller
    C.FUNCTION_RAMP: BenchmarkFunction(C.FUNCTION_RAMP, ramp_batch, None),
}


# ---------------------------------------------------------
# ORACLES
# ---------------------------------------------------------


class FunctionOracle:
    """
    Evaluation capability x -> f(x) over the closed domain box.

    Values are memoized by coordinate tuple, so the corners shared by sibling
    cells are evaluated once. The call counter is advisory.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], domain: Domain, name: str = "f"):
        self.fn = fn
        self.domain = domain
        self.name = name
        self._cache = LRUCache(maxsize=C.ORACLE_CACHE_SIZE)
        self._lock = threading.Lock()
        self._calls = 0

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def calls(self) -> int:
        return self._calls

    def _count(self, n: int):
        with self._lock:
            self._calls += n

    def evaluate(self, x) -> float:
        p = self.domain.check(x)
        key = tuple(p.tolist())
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = float(self.fn(p.reshape(1, -1))[0])
        self._count(1)
        with self._lock:
            # identical value if another thread got here first
            self._cache[key] = value
        return value

    def evaluate_many(self, X) -> np.ndarray:
        """Memoized evaluation of each row; misses are computed in one batch."""
        A = as_points(X, self.d)
        keys = [tuple(row) for row in A.tolist()]
        out = np.empty(len(keys), dtype=np.float64)
        missing = []
        with self._lock:
            for i, key in enumerate(keys):
                hit = self._cache.get(key)
                if hit is None:
                    missing.append(i)
                else:
                    out[i] = hit
        if missing:
            values = self.evaluate_batch(A[missing])
            out[missing] = values
            with self._lock:
                for i, v in zip(missing, values.tolist()):
                    self._cache[keys[i]] = v
        return out

    def evaluate_batch(self, X) -> np.ndarray:
        """Unmemoized vectorized evaluation, used for large test sets."""
        A = as_points(X, self.d)
        inside = self.domain.contains_batch(A)
        if not np.all(inside):
            self.domain.check(A[np.argmin(inside)])
        self._count(A.shape[0])
        return np.asarray(self.fn(A), dtype=np.float64).reshape(-1)

    def __call__(self, X) -> np.ndarray:
        return self.evaluate_batch(X)


def resolve_function(name: str, domain: Domain | None = None) -> FunctionOracle:
    """
    Looks up a benchmark function by name and wraps it into an oracle.

    Raises:
        MajorantError: unknown name, or a dimension-free function without domain.
    """
    bench = FUNCTIONS.get(name)
    if bench is None:
        raise MajorantError(
            C.ERR_MSG_UNKNOWN_FUNCTION.format(name=name, known=", ".join(sorted(FUNCTIONS)))
        )
    dom = domain or bench.domain
    if dom is None:
        raise MajorantError(C.ERR_MSG_FUNCTION_DOMAIN.format(name=name))
    if bench.domain is not None and dom.d != bench.domain.d:
        raise DimensionMismatchError(bench.domain.d, dom.d)
    return FunctionOracle(bench.batch, dom, name)


# ---------------------------------------------------------
# DATASETS
# ---------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Validated records (x_i, f(x_i)) inside a domain."""

    X: np.ndarray
    v: np.ndarray
    domain: Domain
    source: str = field(default="memory", compare=False)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return self.domain.d


def find_monotonicity_violation(X: np.ndarray, v: np.ndarray) -> tuple[int, int] | None:
    """First pair (i, j) with x_i <= x_j but v_i > v_j, scanning i in blocks."""
    n = X.shape[0]
    step = C.MONOTONICITY_CHECK_CHUNK
    for start in range(0, n, step):
        block = X[start : start + step]
        le = np.all(block[:, None, :] <= X[None, :, :], axis=2)
        bad = le & (v[start : start + step, None] > v[None, :])
        if bad.any():
            i, j = np.argwhere(bad)[0]
            return int(start + i), int(j)
    return None


def validate_dataset(X, v, domain: Domain, source: str = "memory") -> Dataset:
    """
    Checks domain membership and monotonicity consistency of the records.

    Raises:
        DatasetError: empty dataset or record outside the closed box.
        MonotonicityViolationError: the data contradicts the non-decreasing hypothesis.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] == 0:
        return Dataset(np.empty((0, domain.d)), v, domain, source)
    A = as_points(X, domain.d)
    if A.shape[0] != v.shape[0] or not np.all(np.isfinite(v)):
        raise DatasetError(C.ERR_MSG_PARSE.format(path=source, error="non-finite or ragged values"))
    inside = domain.contains_batch(A)
    if not np.all(inside):
        idx = int(np.argmin(inside))
        raise DatasetError(C.ERR_MSG_RECORD_OUT_OF_DOMAIN.format(index=idx, point=A[idx].tolist()))
    pair = find_monotonicity_violation(A, v)
    if pair is not None:
        i, j = pair
        raise MonotonicityViolationError(i, j, float(v[i]), float(v[j]))
    return Dataset(A, v, domain, source)


def input_columns(d: int, prefix: str = C.COL_INPUT_PREFIX) -> list[str]:
    return [f"{prefix}{k}" for k in range(1, d + 1)]


def dataset_load(path, domain: Domain) -> Dataset:
    """
    Loads a dataset CSV (`x1,...,xd,f`, `#` comments ignored) and validates it.
    """
    try:
        logger.info(f"Loading dataset: {path}")
        df = pd.read_csv(path, comment=C.CSV_COMMENT, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DatasetError(C.ERR_MSG_NO_RECORDS.format(path=path))
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DatasetError(C.ERR_MSG_PARSE.format(path=path, error=e))

    expected = input_columns(domain.d) + [C.COL_TARGET]
    found = [str(c).strip() for c in df.columns]
    if found != expected:
        raise DatasetError(C.ERR_MSG_COLUMNS.format(path=path, expected=expected, found=found))
    if df.empty:
        raise DatasetError(C.ERR_MSG_NO_RECORDS.format(path=path))
    try:
        values = df.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DatasetError(C.ERR_MSG_PARSE.format(path=path, error=e))
    data = validate_dataset(values[:, :-1], values[:, -1], domain, source=str(path))
    logger.info(f"Dataset {path}: {data.n} records, d={data.d}")
    return data


def dataset_save(data: Dataset, path):
    df = pd.DataFrame(data.X, columns=input_columns(data.d))
    df[C.COL_TARGET] = data.v
    df.to_csv(path, index=False, float_format=C.CSV_FLOAT_FORMAT)


def tilde_f(x, data: Dataset) -> float:
    """
    Empirical majorant: min of v_i over records with x <= x_i, +inf when no
    record dominates x.
    """
    p = as_point(x, data.d)
    if data.n == 0:
        return float("inf")
    dominating = np.all(data.X >= p, axis=1)
    if not dominating.any():
        return float("inf")
    return float(data.v[dominating].min())


class DataOracle:
    """Memoized tilde-f over a dataset, the data-mode counterpart of FunctionOracle."""

    def __init__(self, data: Dataset):
        self.data = data
        self._cache = LRUCache(maxsize=C.ORACLE_CACHE_SIZE)
        self._lock = threading.Lock()

    def evaluate(self, x) -> float:
        p = as_point(x, self.data.d)
        key = tuple(p.tolist())
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = tilde_f(p, self.data)
        with self._lock:
            self._cache[key] = value
        return value

    def count_inside(self, lower: np.ndarray, upper: np.ndarray, closed: np.ndarray) -> int:
        if self.data.n == 0:
            return 0
        X = self.data.X
        below_top = (X < upper) | (closed & (X == upper))
        return int(np.count_nonzero(np.all((X >= lower) & below_top, axis=1)))


def sample_uniform(domain: Domain, n: int, seed: int) -> np.ndarray:
    """n points iid uniform in the closed box, reproducible given the seed."""
    if n < 1:
        raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"sample count must be >= 1, got {n}"))
    rng = np.random.default_rng(seed)
    U = rng.random((n, domain.d))
    return np.minimum(domain.lower + U * domain.span, domain.upper)


def generate_dataset(oracle: FunctionOracle, n: int, seed: int) -> Dataset:
    X = sample_uniform(oracle.domain, n, seed)
    return validate_dataset(X, oracle.evaluate_batch(X), oracle.domain, source=oracle.name)
