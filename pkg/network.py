import copy
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from tqdm import tqdm

import constants as C
from services.cover import MajoringPointSet
from services.errors import (
    DimensionMismatchError,
    MajorantError,
    ModelFormatError,
    TrainingDivergedError,
    VerificationFailedError,
)
from services.geometry import Domain, as_point, as_points

logger = logging.getLogger(__name__)


# ---------------------------------------------------------
# CONFIGURATION
# ---------------------------------------------------------


@dataclass(frozen=True)
class LossParams:
    beta: float = C.DEFAULT_BETA
    alpha_plus: float = C.DEFAULT_ALPHA_PLUS
    alpha_minus: float = C.DEFAULT_ALPHA_MINUS
    p: int = C.DEFAULT_P

    def __post_init__(self):
        if self.beta < 0 or self.alpha_plus < 0 or self.alpha_minus < 0 or int(self.p) != self.p or self.p < 1:
            raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"loss {self}"))

    @classmethod
    def squared(cls) -> "LossParams":
        """Plain symmetric l2 loss, the loss of the delta-baselines."""
        return cls(beta=0.0, alpha_plus=1.0, alpha_minus=1.0, p=2)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "p": self.p,
        }


@dataclass(frozen=True)
class GrowPolicy:
    """
    Architecture growth between failed attempts: width first, then depth,
    alternating. When every attempt fails, the best one may still have its
    output offset raised by up to `max_lift_ratio` times the range of b;
    0 turns that off.
    """

    max_retries: int = C.DEFAULT_MAX_RETRIES
    width_factor: int = C.DEFAULT_WIDTH_FACTOR
    depth_step: int = C.DEFAULT_DEPTH_STEP
    max_lift_ratio: float = C.DEFAULT_MAX_LIFT_RATIO

    def __post_init__(self):
        if self.max_retries < 1 or self.width_factor < 1 or self.depth_step < 0 or not self.max_lift_ratio >= 0:
            raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"grow policy {self}"))

    def grow(self, width: int, depth: int, attempt: int) -> tuple[int, int]:
        if attempt % 2 == 1:
            return width * self.width_factor, depth
        return width, depth + self.depth_step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = C.DEFAULT_EPOCHS
    batch_size: int = C.DEFAULT_BATCH_SIZE
    learning_rate: float | None = None
    optimizer: str = C.DEFAULT_OPTIMIZER
    decay_start: float = C.DEFAULT_DECAY_START
    final_lr_ratio: float = C.DEFAULT_FINAL_LR_RATIO
    seed: int = C.DEFAULT_SEED
    width: int = C.DEFAULT_WIDTH
    depth: int = C.DEFAULT_DEPTH
    theta: float = C.DEFAULT_THETA
    loss: LossParams = field(default_factory=LossParams)
    grow: GrowPolicy = field(default_factory=GrowPolicy)
    progress: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.width < 1 or self.depth < 1:
            raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail="epochs, batch size, width and depth must be >= 1"))
        if self.optimizer not in C.OPTIMIZERS:
            raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"unknown optimizer '{self.optimizer}'"))
        if not self.theta > 0:
            raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"theta must be > 0, got {self.theta}"))

    @property
    def base_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        if self.optimizer == C.OPTIMIZER_SGD:
            return C.DEFAULT_SGD_LEARNING_RATE
        return C.DEFAULT_LEARNING_RATE

    def learning_rate_at(self, epoch: int) -> float:
        """Constant, then linear decay down to `final_lr_ratio` of the base rate at the last epoch."""
        lr = self.base_learning_rate
        start = int(self.decay_start * self.epochs)
        if epoch < start or self.epochs - 1 <= start:
            return lr
        frac = (epoch - start) / (self.epochs - 1 - start)
        return lr * (1.0 - frac * (1.0 - self.final_lr_ratio))


# ---------------------------------------------------------
# ASYMMETRIC LOSS
# ---------------------------------------------------------


def asym_loss(t, lp: LossParams):
    """
    alpha+ (t - beta)^2 for t >= beta, alpha- |t - beta|^p below.
    Vectorized over `t`; the residual t is prediction minus bound.
    """
    t = np.asarray(t, dtype=np.float64)
    u = t - lp.beta
    out = np.where(u >= 0, lp.alpha_plus * u * u, lp.alpha_minus * np.abs(u) ** lp.p)
    return float(out) if out.ndim == 0 else out


def asym_loss_grad(t, lp: LossParams) -> np.ndarray:
    # subgradient 0 at the knee for p = 1
    u = np.asarray(t, dtype=np.float64) - lp.beta
    under = -lp.p * lp.alpha_minus * np.abs(u) ** (lp.p - 1)
    return np.where(u >= 0, 2.0 * lp.alpha_plus * u, under)


# ---------------------------------------------------------
# NETWORK
# ---------------------------------------------------------


@dataclass
class VerificationReport:
    margins: np.ndarray
    min_margin: float
    violations: int
    passed: bool
    history: list[dict] = field(default_factory=list)

    @property
    def m(self) -> int:
        return int(self.margins.shape[0])

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "min_margin": self.min_margin,
            "violations": self.violations,
            "passed": self.passed,
            "history": self.history,
            "margins": self.margins.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "VerificationReport":
        margins = np.array(payload.get("margins", []), dtype=np.float64)
        return cls(
            margins,
            float(payload["min_margin"]),
            int(payload["violations"]),
            bool(payload["passed"]),
            list(payload.get("history", [])),
        )


@dataclass
class MonotoneMlp:
    """
    Fully connected net with weights stored as (fan_in, fan_out) matrices,
    tanh(t / theta) on hidden layers and a linear output. Inputs are mapped
    affinely from [x_lower, x_upper] to [-1, 1] and the output is
    de-standardized as y_mean + y_scale * out; both maps have positive slope.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    theta: float = C.DEFAULT_THETA
    x_lower: np.ndarray | None = None
    x_upper: np.ndarray | None = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    report: VerificationReport | None = None

    def __post_init__(self):
        d = self.weights[0].shape[0]
        if self.x_lower is None:
            self.x_lower = -np.ones(d)
        if self.x_upper is None:
            self.x_upper = np.ones(d)

    @property
    def d(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def width(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def layer_sizes(self) -> list[int]:
        return [self.d] + [int(W.shape[1]) for W in self.weights]

    @property
    def verified(self) -> bool:
        return self.report is not None and self.report.passed

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def normalize(self, A: np.ndarray) -> np.ndarray:
        return 2.0 * (A - self.x_lower) / (self.x_upper - self.x_lower) - 1.0

    def activations(self, Z: np.ndarray) -> list[np.ndarray]:
        """Layer outputs for normalized inputs Z; the last entry is the raw (n,) output."""
        hs = [Z]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            hs.append(np.tanh((hs[-1] @ W + b) / self.theta))
        hs.append((hs[-1] @ self.weights[-1] + self.biases[-1])[:, 0])
        return hs

    def predict(self, X) -> np.ndarray:
        """The single forward path used for serving and for verification."""
        A = as_points(X, self.d)
        return self.y_mean + self.y_scale * self.activations(self.normalize(A))[-1]

    def copy(self) -> "MonotoneMlp":
        return copy.deepcopy(self)


def parameter_count(net: MonotoneMlp) -> int:
    return net.parameter_count()


def mlp_init(
    d: int,
    h: int,
    l: int,
    theta: float = C.DEFAULT_THETA,
    seed: int = C.DEFAULT_SEED,
    domain: Domain | None = None,
    targets: np.ndarray | None = None,
) -> MonotoneMlp:
    """
    Builds a net with layer sizes [d, l, ..., l, 1] (h hidden layers).

    Weights are |U(-1/sqrt(fan_in), 1/sqrt(fan_in))|, biases zero. When
    `domain` is given inputs are mapped from it to [-1, 1]; when `targets` is
    given outputs are standardized against their mean and spread.
    """
    if min(d, h, l) < 1 or not theta > 0:
        raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"d={d}, h={h}, l={l}, theta={theta}"))
    rng = np.random.default_rng(seed)
    sizes = [d] + [l] * h + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(np.abs(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
        biases.append(np.zeros(fan_out))
    net = MonotoneMlp(weights, biases, theta)
    if domain is not None:
        net.x_lower, net.x_upper = domain.lower, domain.upper
    if targets is not None and len(targets) > 0:
        t = np.asarray(targets, dtype=np.float64)
        net.y_mean = float(t.mean())
        spread = float(t.std())
        net.y_scale = spread if spread > 0 else 1.0
    return net


def mlp_forward(net: MonotoneMlp, x) -> float:
    return float(net.predict(as_point(x, net.d).reshape(1, -1))[0])


def project_nonneg(net: MonotoneMlp) -> MonotoneMlp:
    """Zeroes every negative weight in place; biases are left free."""
    for W in net.weights:
        np.maximum(W, 0.0, out=W)
    return net


# ---------------------------------------------------------
# OBJECTIVE AND GRADIENT
# ---------------------------------------------------------


def _targets(points, d: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(points, MajoringPointSet):
        a, b = points.a, points.b
    else:
        a, b = points
    a = as_points(a, d)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape[0] == 0 or a.shape[0] != b.shape[0]:
        raise MajorantError(C.ERR_MSG_NO_POINTS)
    return a, b


def _objective(net: MonotoneMlp, Z: np.ndarray, b: np.ndarray, lp: LossParams) -> float:
    t = net.y_mean + net.y_scale * net.activations(Z)[-1] - b
    return float(np.sum(asym_loss(t, lp)))


def objective(net: MonotoneMlp, points, lp: LossParams) -> float:
    """E(w, b) = sum_i loss(f_net(a_i) - b_i), in the units of b."""
    a, b = _targets(points, net.d)
    return _objective(net, net.normalize(a), b, lp)


def _backprop(net: MonotoneMlp, Z: np.ndarray, b: np.ndarray, lp: LossParams) -> list[np.ndarray]:
    hs = net.activations(Z)
    t = net.y_mean + net.y_scale * hs[-1] - b
    g = (net.y_scale * asym_loss_grad(t, lp))[:, None]
    n_layers = len(net.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    grad_w[-1] = hs[-2].T @ g
    grad_b[-1] = g.sum(axis=0)
    delta = g @ net.weights[-1].T
    for k in range(n_layers - 2, -1, -1):
        dz = delta * (1.0 - hs[k + 1] ** 2) / net.theta
        grad_w[k] = hs[k].T @ dz
        grad_b[k] = dz.sum(axis=0)
        delta = dz @ net.weights[k].T
    return grad_w + grad_b


def gradient(net: MonotoneMlp, points, lp: LossParams) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradient of the batch objective w.r.t. (weights, biases)."""
    a, b = _targets(points, net.d)
    grads = _backprop(net, net.normalize(a), b, lp)
    n_layers = len(net.weights)
    return grads[:n_layers], grads[n_layers:]


# ---------------------------------------------------------
# TRAINING
# ---------------------------------------------------------


class _Optimizer:
    def __init__(self, cfg: TrainConfig, params: list[np.ndarray]):
        self.kind = cfg.optimizer
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float):
        if self.kind == C.OPTIMIZER_SGD:
            for p, g in zip(params, grads):
                p -= lr * g
            return
        self.step_count += 1
        c1 = 1.0 - C.ADAM_BETA1 ** self.step_count
        c2 = 1.0 - C.ADAM_BETA2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= C.ADAM_BETA1
            m += (1.0 - C.ADAM_BETA1) * g
            v *= C.ADAM_BETA2
            v += (1.0 - C.ADAM_BETA2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + C.ADAM_EPSILON)


def train(
    net: MonotoneMlp,
    points,
    cfg: TrainConfig,
    loss: LossParams | None = None,
    project: bool = True,
) -> list[float]:
    """
    Minibatch training of `net` in place; returns the objective after every epoch.

    With `project` the weights are clipped to >= 0 after every update, so the
    returned net is non-decreasing. `points` is a MajoringPointSet or an
    (inputs, targets) pair.

    Raises:
        TrainingDivergedError: the objective became non-finite.
    """
    a, b = _targets(points, net.d)
    lp = loss or cfg.loss
    rng = np.random.default_rng(cfg.seed)
    Z = net.normalize(a)
    m = a.shape[0]
    batch = min(cfg.batch_size, m)
    params = net.parameters()
    opt = _Optimizer(cfg, params)
    trace = []

    for epoch in tqdm(range(cfg.epochs), disable=not cfg.progress, desc="Training", leave=False):
        lr = cfg.learning_rate_at(epoch)
        order = rng.permutation(m)
        for start in range(0, m, batch):
            idx = order[start : start + batch]
            grads = _backprop(net, Z[idx], b[idx], lp)
            opt.step(params, [g / len(idx) for g in grads], lr)
            if project:
                project_nonneg(net)
        value = _objective(net, Z, b, lp)
        if not np.isfinite(value):
            raise TrainingDivergedError(epoch, value)
        trace.append(value)
        logger.debug(f"Epoch {epoch}: objective {value:.6g} (lr {lr:.3g})")

    return trace


# ---------------------------------------------------------
# VERIFICATION
# ---------------------------------------------------------


def verify_samples(net: MonotoneMlp, points: MajoringPointSet) -> VerificationReport:
    """Exact check f_net(a_i) >= b_i at every Majoring Point, through `predict`."""
    margins = net.predict(points.a) - points.b
    ok = margins >= 0
    violations = int(np.count_nonzero(~ok))
    min_margin = float(margins.min()) if np.all(np.isfinite(margins)) else float("-inf")
    return VerificationReport(margins, min_margin, violations, violations == 0)


def calibrate_output(
    net: MonotoneMlp, points: MajoringPointSet, max_lift: float
) -> tuple[MonotoneMlp, VerificationReport, float] | None:
    """
    Raises the output offset of a copy of `net` until f_net(a_i) >= b_i holds
    at every Majoring Point. Weights are untouched, so the copy stays
    non-decreasing. Returns (copy, passing report, lift), or None when the
    shortfall is not finite or the lift would exceed `max_lift`.
    """
    lifted = net.copy()
    report = verify_samples(lifted, points)
    lift = 0.0
    for _ in range(C.CALIBRATION_ROUNDS):
        if report.passed:
            return lifted, report, lift
        shortfall = -report.min_margin
        if not np.isfinite(shortfall):
            return None
        # a few ulps on top so rounding in predict cannot undo the lift
        step = float(shortfall + 4 * np.spacing(abs(lifted.y_mean) + float(np.abs(points.b).max())))
        if lift + step > max_lift:
            return None
        lifted.y_mean += step
        lift += step
        report = verify_samples(lifted, points)
    return (lifted, report, lift) if report.passed else None


def _resolve_domain(points: MajoringPointSet, domain: Domain | None) -> Domain:
    domain = domain or points.domain
    if domain is None:
        raise MajorantError(C.ERR_MSG_NO_DOMAIN)
    if domain.d != points.d:
        raise DimensionMismatchError(points.d, domain.d)
    inside = domain.contains_batch(points.a)
    if not inside.all():
        domain.check(points.a[np.argmin(inside)])
    return domain


def train_until_verified(
    points: MajoringPointSet, cfg: TrainConfig, domain: Domain | None = None
) -> tuple[MonotoneMlp, VerificationReport]:
    """
    Trains, verifies, and on failure grows the net and retrains with the next
    seed, for at most `cfg.grow.max_retries` attempts. When all of them fail,
    the best attempt is lifted through `calibrate_output` if the lift fits in
    `cfg.grow.max_lift_ratio` of the range of b. The returned net carries its
    passing report. Inputs are mapped from `domain`, by default the domain the
    points carry.

    Raises:
        MajorantError: no domain given and none carried by the points.
        DomainError: a Majoring Point lies outside the domain.
        VerificationFailedError: every attempt failed and could not be
            lifted; holds the attempt with the largest min margin.
    """
    if points.m == 0:
        raise MajorantError(C.ERR_MSG_NO_POINTS)
    domain = _resolve_domain(points, domain)
    width, depth = cfg.width, cfg.depth
    best_net, best_report, best_entry = None, None, None
    history = []

    for attempt in range(1, cfg.grow.max_retries + 1):
        seed = cfg.seed + attempt - 1
        logger.info(f"Attempt {attempt}: width={width}, depth={depth}, seed={seed}")
        net = mlp_init(points.d, depth, width, cfg.theta, seed, domain, points.b)
        try:
            train(net, points, replace(cfg, seed=seed, width=width, depth=depth))
            report = verify_samples(net, points)
        except TrainingDivergedError as e:
            logger.warning(str(e))
            report = VerificationReport(np.full(points.m, np.nan), float("-inf"), points.m, False)

        entry = {
            "attempt": attempt,
            "width": width,
            "depth": depth,
            "seed": seed,
            "min_margin": report.min_margin,
            "violations": report.violations,
            "passed": report.passed,
            "lift": 0.0,
        }
        history.append(entry)
        report.history = list(history)
        net.report = report
        if best_report is None or report.min_margin > best_report.min_margin:
            best_net, best_report, best_entry = net, report, entry
        if report.passed:
            logger.info(C.MSG_VERIFIED.format(m=points.m, margin=report.min_margin))
            return net, report
        logger.info(C.MSG_NOT_VERIFIED.format(violations=report.violations, m=points.m, margin=report.min_margin))
        width, depth = cfg.grow.grow(width, depth, attempt)

    max_lift = cfg.grow.max_lift_ratio * float(points.b.max() - points.b.min())
    calibrated = calibrate_output(best_net, points, max_lift) if max_lift > 0 else None
    if calibrated is not None:
        net, report, lift = calibrated
        history.append(
            {**best_entry, "min_margin": report.min_margin, "violations": 0, "passed": True, "lift": lift}
        )
        report.history = list(history)
        net.report = report
        logger.warning(C.MSG_CALIBRATED.format(attempt=best_entry["attempt"], lift=lift))
        logger.info(C.MSG_VERIFIED.format(m=points.m, margin=report.min_margin))
        return net, report

    best_report.history = list(history)
    raise VerificationFailedError(best_net, best_report, cfg.grow.max_retries)


# ---------------------------------------------------------
# MODEL FILE
# ---------------------------------------------------------


def model_to_dict(net: MonotoneMlp) -> dict:
    return {
        "format": C.MODEL_FORMAT_NAME,
        "version": C.MODEL_FORMAT_VERSION,
        "layer_sizes": net.layer_sizes,
        "theta": net.theta,
        "input_map": {"lower": net.x_lower.tolist(), "upper": net.x_upper.tolist()},
        "target_map": {"mean": net.y_mean, "scale": net.y_scale},
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "report": net.report.to_dict() if net.report is not None else None,
    }


def model_save(net: MonotoneMlp, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(net), f)


def model_from_dict(payload: dict, path="model") -> MonotoneMlp:
    if payload.get("format") != C.MODEL_FORMAT_NAME:
        raise ModelFormatError(C.ERR_MSG_MODEL_FORMAT.format(path=path, detail="not a model file"))
    if payload.get("version") != C.MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            C.ERR_MSG_MODEL_VERSION.format(found=payload.get("version"), expected=C.MODEL_FORMAT_VERSION)
        )
    try:
        sizes = [int(s) for s in payload["layer_sizes"]]
        weights = [np.array(W, dtype=np.float64) for W in payload["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in payload["biases"]]
        theta = float(payload["theta"])
        x_lower = np.array(payload["input_map"]["lower"], dtype=np.float64)
        x_upper = np.array(payload["input_map"]["upper"], dtype=np.float64)
        y_mean = float(payload["target_map"]["mean"])
        y_scale = float(payload["target_map"]["scale"])
        report = payload.get("report")
        report = VerificationReport.from_dict(report) if report else None
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(C.ERR_MSG_MODEL_FORMAT.format(path=path, detail=e))

    shapes = [(i, o) for i, o in zip(sizes[:-1], sizes[1:])]
    if (
        len(weights) != len(shapes)
        or len(biases) != len(shapes)
        or any(W.shape != s for W, s in zip(weights, shapes))
        or any(b.shape != (s[1],) for b, s in zip(biases, shapes))
        or x_lower.shape != (sizes[0],)
        or x_upper.shape != (sizes[0],)
    ):
        raise ModelFormatError(C.ERR_MSG_MODEL_FORMAT.format(path=path, detail="shapes do not match layer sizes"))
    for k, W in enumerate(weights):
        if not np.all(W >= 0):
            raise ModelFormatError(C.ERR_MSG_NEGATIVE_WEIGHT.format(path=path, layer=k))
    if not (theta > 0 and y_scale > 0 and np.all(x_lower < x_upper)):
        raise ModelFormatError(C.ERR_MSG_MODEL_FORMAT.format(path=path, detail="maps must be increasing"))
    return MonotoneMlp(weights, biases, theta, x_lower, x_upper, y_mean, y_scale, report)


def model_load(path) -> MonotoneMlp:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ModelFormatError(C.ERR_MSG_MODEL_FORMAT.format(path=path, detail=e))
    return model_from_dict(payload, path)
