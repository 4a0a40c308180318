"""
Experiment spec files: JSON validated against `EXPERIMENT_SCHEMA`, then
turned into the configuration objects the pipeline runs on.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from jsonschema import Draft202012Validator

import constants as C
from network import GrowPolicy, LossParams, TrainConfig
from services.cover import AdaptiveParams
from services.errors import ExperimentSpecError, MajorantError
from services.geometry import Domain
from services.oracle import FUNCTIONS

logger = logging.getLogger(__name__)

_NUMBER = {"type": "number"}
_COUNT = {"type": "integer", "minimum": 1}

EXPERIMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "points"],
    "anyOf": [{"required": ["function"]}, {"required": ["dataset"]}],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "function": {"type": "string"},
        "dataset": {"type": "string"},
        "domain": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
        },
        "data": {
            "type": "object",
            "required": ["n"],
            "additionalProperties": False,
            "properties": {"n": _COUNT, "seed": {"type": "integer"}},
        },
        "points": {"enum": list(C.COVER_MODES)},
        "grid_values": {"enum": [C.MODE_FUNCTION, C.MODE_DATA]},
        "cover": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "eps_f": {"type": "number", "minimum": 0},
                "n_p": {"type": "integer", "minimum": 0},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": _COUNT,
                "batch_size": _COUNT,
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "optimizer": {"enum": list(C.OPTIMIZERS)},
                "seed": {"type": "integer"},
                "width": _COUNT,
                "depth": _COUNT,
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "max_retries": _COUNT,
                "max_lift_ratio": {"type": "number", "minimum": 0},
                "progress": {"type": "boolean"},
            },
        },
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "number", "minimum": 0},
                "alpha_plus": {"type": "number", "minimum": 0},
                "alpha_minus": {"type": "number", "minimum": 0},
                "p": _COUNT,
            },
        },
        "methods": {
            "type": "array",
            "minItems": 1,
            "uniqueItems": True,
            "items": {"enum": list(C.METHODS)},
        },
        "deltas": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "n_test": _COUNT,
        "test_seed": {"type": "integer"},
        "probe_pairs": _COUNT,
        "curve_points": {"type": "integer", "minimum": 2},
        "output_dir": {"type": "string"},
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    domain: Domain
    points: str
    params: AdaptiveParams
    train: TrainConfig
    function: str | None = None
    dataset: str | None = None
    data_n: int | None = None
    data_seed: int = C.DEFAULT_SEED
    grid_values: str = C.MODE_FUNCTION
    methods: tuple[str, ...] = C.METHODS
    deltas: tuple[float, ...] = ()
    n_test: int = C.DEFAULT_N_TEST
    test_seed: int = C.DEFAULT_TEST_SEED
    probe_pairs: int = C.DEFAULT_PROBE_PAIRS
    curve_points: int = C.DEFAULT_CURVE_POINTS
    output_dir: Path = field(default_factory=lambda: Path("."))

    @property
    def uses_data(self) -> bool:
        """Whether Majoring Points come from tilde-f rather than the function."""
        if self.points == C.MODE_DATA or self.function is None:
            return True
        return self.points == C.MODE_GRID and self.grid_values == C.MODE_DATA

    @property
    def label(self) -> str:
        return f"{C.METHOD_ONN}-{C.PROVENANCE_SHORT[self.points]}"


def _error_path(error) -> str:
    return "/".join(str(p) for p in error.absolute_path) or "<root>"


def validate_experiment(payload) -> None:
    validator = Draft202012Validator(EXPERIMENT_SCHEMA)
    errors = sorted(validator.iter_errors(payload), key=lambda e: list(e.absolute_path))
    if errors:
        detail = "; ".join(f"{_error_path(e)}: {e.message}" for e in errors)
        raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail=detail))


def experiment_from_dict(payload: dict, base_dir: Path | None = None) -> ExperimentSpec:
    """
    Validates `payload` and resolves defaults. Relative paths are taken from
    `base_dir` (the spec file's folder).

    Raises:
        ExperimentSpecError: schema violation or inconsistent choices.
    """
    validate_experiment(payload)
    base = base_dir or Path(".")
    function = payload.get("function")
    if function is not None and function not in FUNCTIONS:
        raise ExperimentSpecError(
            C.ERR_MSG_SPEC.format(detail=C.ERR_MSG_UNKNOWN_FUNCTION.format(name=function, known=", ".join(sorted(FUNCTIONS))))
        )
    if payload["points"] == C.MODE_FUNCTION and function is None:
        raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail="points 'function' needs a function"))

    try:
        if "domain" in payload:
            domain = Domain.from_bounds(payload["domain"])
        elif function is not None and FUNCTIONS[function].domain is not None:
            domain = FUNCTIONS[function].domain
        else:
            raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail="a domain is required"))
        cover = payload.get("cover", {})
        params = AdaptiveParams(
            cover.get("eps", C.DEFAULT_EPS),
            cover.get("eps_f", C.DEFAULT_EPS_F),
            cover.get("n_p", C.DEFAULT_NP),
        )
        loss = LossParams(**payload.get("loss", {}))
        train = dict(payload.get("train", {}))
        grow = GrowPolicy(
            max_retries=train.pop("max_retries", C.DEFAULT_MAX_RETRIES),
            max_lift_ratio=train.pop("max_lift_ratio", C.DEFAULT_MAX_LIFT_RATIO),
        )
        cfg = TrainConfig(loss=loss, grow=grow, **train)
    except ExperimentSpecError:
        raise
    except MajorantError as e:
        raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail=e))

    dataset = payload.get("dataset")
    data = payload.get("data", {})
    uses_data = payload["points"] == C.MODE_DATA or function is None or payload.get("grid_values") == C.MODE_DATA
    if uses_data and dataset is None and not data:
        raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail="dataset-based points need 'dataset' or 'data'"))
    if data and function is None:
        raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail="'data' samples a function; give 'function'"))

    methods = tuple(payload.get("methods", C.METHODS))
    deltas = tuple(float(v) for v in payload.get("deltas", []))
    if C.METHOD_BASELINE in methods and not deltas:
        raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail="method 'baseline' needs a 'deltas' list"))
    if function is None:
        logger.info("No function given: metrics are computed on the dataset records")

    return ExperimentSpec(
        name=payload["name"],
        domain=domain,
        points=payload["points"],
        params=params,
        train=cfg,
        function=function,
        dataset=str(base / dataset) if dataset else None,
        data_n=data.get("n"),
        data_seed=data.get("seed", C.DEFAULT_SEED),
        grid_values=payload.get("grid_values", C.MODE_FUNCTION),
        methods=methods,
        deltas=deltas,
        n_test=payload.get("n_test", C.DEFAULT_N_TEST),
        test_seed=payload.get("test_seed", C.DEFAULT_TEST_SEED),
        probe_pairs=payload.get("probe_pairs", C.DEFAULT_PROBE_PAIRS),
        curve_points=payload.get("curve_points", C.DEFAULT_CURVE_POINTS),
        output_dir=base / payload.get("output_dir", "."),
    )


def load_experiment(path) -> ExperimentSpec:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ExperimentSpecError(C.ERR_MSG_SPEC.format(detail=e))
    return experiment_from_dict(payload, path.parent)
