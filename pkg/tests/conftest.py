import sys
import os

# Add the project root directory to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

import constants as C
from network import TrainConfig, train_until_verified
from services.cover import build_grid_cover, majoring_points_from_cover_fn
from services.geometry import Domain
from services.oracle import FunctionOracle, resolve_function, validate_dataset


@pytest.fixture
def unit_interval():
    return Domain((0.0,), (1.0,))


@pytest.fixture
def identity_oracle(unit_interval):
    return FunctionOracle(lambda X: np.asarray(X).reshape(-1), unit_interval, "identity")


@pytest.fixture
def f1_oracle():
    return resolve_function(C.FUNCTION_F1)


@pytest.fixture
def two_record_data(unit_interval):
    # the 1D dataset {(0.1, 0.1), (0.9, 0.9)}
    return validate_dataset([[0.1], [0.9]], [0.1, 0.9], unit_interval)


@pytest.fixture(scope="module")
def f1_grid_points():
    oracle = resolve_function(C.FUNCTION_F1)
    cover = build_grid_cover(oracle.domain, 0.1)
    return majoring_points_from_cover_fn(cover, oracle)


@pytest.fixture(scope="session")
def f1_certified():
    """The f1 grid at eps = 0.1 trained with the default configuration."""
    oracle = resolve_function(C.FUNCTION_F1)
    points = majoring_points_from_cover_fn(build_grid_cover(oracle.domain, 0.1), oracle)
    net, report = train_until_verified(points, TrainConfig())
    return points, net, report
