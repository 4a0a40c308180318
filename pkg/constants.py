# Project
APP_DESCRIPTION = (
    "Guaranteed over-estimating surrogates of non-decreasing functions: "
    "covers, Majoring Points, monotone networks and their certificates."
)
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# Environment Variables (all optional)
ENV_CELL_BUDGET = "MAJORANT_CELL_BUDGET"
ENV_LOG_LEVEL = "MAJORANT_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "INFO"

# Cover Construction
DEFAULT_CELL_BUDGET = 10_000_000
DEFAULT_EPS = 0.1
DEFAULT_EPS_F = 0.5
DEFAULT_NP = 0
ORACLE_CACHE_SIZE = 1_000_000

# Cover Modes / Majoring Point Provenance
MODE_GRID = "grid"
MODE_FUNCTION = "function"
MODE_DATA = "data"
COVER_MODES = (MODE_GRID, MODE_FUNCTION, MODE_DATA)
PROVENANCE_SHORT = {MODE_GRID: "gmp", MODE_FUNCTION: "fmp", MODE_DATA: "dmp"}

# Dataset CSV
COL_TARGET = "f"
COL_BOUND = "b"
COL_INPUT_PREFIX = "x"
COL_POINT_PREFIX = "a"
CSV_COMMENT = "#"
POINTS_DOMAIN_HEADER = "# domain"
CSV_FLOAT_FORMAT = "%.17g"
MONOTONICITY_CHECK_CHUNK = 256

# Network Architecture
DEFAULT_DEPTH = 4
DEFAULT_WIDTH = 64
DEFAULT_THETA = 1.0

# Asymmetric Loss
DEFAULT_BETA = 0.1
DEFAULT_ALPHA_PLUS = 1.0
DEFAULT_ALPHA_MINUS = 100.0
DEFAULT_P = 2

# Training
OPTIMIZER_ADAM = "adam"
OPTIMIZER_SGD = "sgd"
OPTIMIZERS = (OPTIMIZER_ADAM, OPTIMIZER_SGD)
DEFAULT_OPTIMIZER = OPTIMIZER_ADAM
DEFAULT_EPOCHS = 3000
DEFAULT_BATCH_SIZE = 32
DEFAULT_LEARNING_RATE = 1e-2
DEFAULT_SGD_LEARNING_RATE = 1e-3
DEFAULT_DECAY_START = 0.5
DEFAULT_FINAL_LR_RATIO = 0.1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
DEFAULT_SEED = 0

# Grow Policy
DEFAULT_MAX_RETRIES = 3
DEFAULT_WIDTH_FACTOR = 2
DEFAULT_DEPTH_STEP = 1
# last resort after the retries: the best net may be lifted by at most
# this fraction of max(b) - min(b)
DEFAULT_MAX_LIFT_RATIO = 0.1
CALIBRATION_ROUNDS = 4

# Model File
MODEL_FORMAT_VERSION = 1
MODEL_FORMAT_NAME = "monotone-mlp"

# Evaluation
DEFAULT_N_TEST = 100_000
DEFAULT_TEST_SEED = 12345
DEFAULT_CURVE_POINTS = 2001
DEFAULT_PROBE_PAIRS = 10_000
METHOD_FC = "fc"
METHOD_ONN = "onn"
METHOD_BASELINE = "baseline"
METHODS = (METHOD_FC, METHOD_ONN, METHOD_BASELINE)
METRICS_FILE = "metrics.csv"
CURVE_FILE_TEMPLATE = "curve_{name}.csv"
CELLS_FILE_TEMPLATE = "cells_{name}.json"
MODEL_FILE_TEMPLATE = "model_{name}.json"
METRICS_COLUMNS = [
    "method",
    "m",
    "n_test",
    "seed",
    "mae",
    "rmse",
    "mean_signed_error",
    "op_percent",
    "fg",
    "memory_floats",
    "monotonicity_violations",
    "baseline_guarantee",
]

# Experiment Pipeline Stages
STAGE_DATA = "data"
STAGE_COVER = "cover"
STAGE_POINTS = "points"
STAGE_TRAIN = "train"
STAGE_METRICS = "metrics"
STAGE_OUTPUT = "output"

# Benchmark Functions
FUNCTION_F1 = "f1"
FUNCTION_F1_PRINTED = "f1-printed"
FUNCTION_G2D = "g2d"
FUNCTION_RAMP = "ramp"
FUNCTION_MONO6 = "mono6"
F1_LOWER = -10.0
F1_UPPER = 10.0
G2D_LOWER = 0.0
G2D_UPPER = 15.0
G2D_RADIUS_SHIFT = 10.0
MONO_STEP_SHARPNESS = 6.0
MONO6_DIMENSION = 6

# Error Messages
ERR_MSG_DIMENSION = "Dimension mismatch: expected {expected}, got {got}."
ERR_MSG_NON_FINITE = "Point has non-finite coordinates: {point}."
ERR_MSG_BAD_RECTANGLE = "Rectangle lower corner {lower} is not below upper corner {upper}."
ERR_MSG_BAD_DOMAIN = "Domain requires y_min < y_max in every coordinate, got {y_min} and {y_max}."
ERR_MSG_DEGENERATE = "Rectangle {lower}..{upper} is degenerate and cannot be split further."
ERR_MSG_OUT_OF_DOMAIN = "Point {point} lies outside the domain [{y_min}, {y_max}]."
ERR_MSG_F1_DOMAIN = "f1 is defined on [-10, 10], got {x}."
ERR_MSG_G2D_DOMAIN = "g2d is defined on [0, 15]^2, got ({x}, {y})."
ERR_MSG_UNKNOWN_FUNCTION = "Unknown function '{name}'. Known: {known}."
ERR_MSG_FUNCTION_DOMAIN = "Function '{name}' needs an explicit --domain."
ERR_MSG_NO_RECORDS = "Dataset {path} has no records."
ERR_MSG_PARSE = "Could not parse {path}: {error}"
ERR_MSG_COLUMNS = "File {path} must have columns {expected}, found {found}."
ERR_MSG_RECORD_OUT_OF_DOMAIN = "Record {index} at {point} lies outside the domain."
ERR_MSG_MONOTONICITY = (
    "Records {i} and {j} contradict monotonicity: x_{i} <= x_{j} but f {vi} > {vj}."
)
ERR_MSG_BAD_PARAMS = "Invalid parameters: {detail}"
ERR_MSG_CELL_BUDGET = "Cover needs {cells} cells, above the budget of {budget}."
ERR_MSG_NO_FINITE_POINTS = "No cell has a dominating sample above its upper corner."
ERR_MSG_UNCOVERED = "Point {point} is not covered by any cell with a finite bound."
ERR_MSG_COVER_NOT_ANNOTATED = "Cover has no upper values; build Majoring Points first."
ERR_MSG_DIVERGED = "Training diverged at epoch {epoch} (objective {value})."
ERR_MSG_NO_POINTS = "Training needs at least one Majoring Point."
ERR_MSG_NO_DOMAIN = "The Majoring Points carry no domain; give one (--domain lo..hi per axis)."
ERR_MSG_RETRIES_EXHAUSTED = (
    "No verified network after {attempts} attempts (best min margin {margin:.6g})."
)
ERR_MSG_MODEL_VERSION = "Model file version {found} is not supported (expected {expected})."
ERR_MSG_MODEL_FORMAT = "Invalid model file {path}: {detail}"
ERR_MSG_NEGATIVE_WEIGHT = "Model file {path} holds a negative weight in layer {layer}."
ERR_MSG_UNVERIFIED_MODEL = (
    "Model carries no passing verification report; pass --unverified to predict anyway."
)
ERR_MSG_SPEC = "Invalid experiment spec: {detail}"
ERR_MSG_STAGE = "Stage '{stage}' failed: {error}"

# CLI Messages
MSG_COVER_BUILT = "Cover built: {m} cells (mode={mode})."
MSG_DROPPED_CELLS = (
    "{dropped} cells have no dominating sample above them; "
    "guarantee scope excludes {fraction:.4%} of the domain volume."
)
MSG_VERIFIED = "Certificate PASSED: {m} Majoring Points, min margin {margin:.6g}."
MSG_NOT_VERIFIED = "Certificate FAILED: {violations} of {m} Majoring Points violated (min margin {margin:.6g})."
MSG_CALIBRATED = "Output of attempt {attempt} lifted by {lift:.6g} so every Majoring Point is dominated."
MSG_EXTRAPOLATION = "Point {point} lies outside the domain: value carries no guarantee."
MSG_UNVERIFIED_PREDICTION = "Serving predictions from an unverified model."
