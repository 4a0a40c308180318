import functools
import logging
import os
import sys

import click
import numpy as np
import pandas as pd
from dotenv import load_dotenv

import constants as C
from evaluation import (
    TestSet,
    make_testset,
    mae,
    mean_signed_error,
    monotonicity_probe,
    op_metric,
    rmse,
    run_experiment,
)
from network import (
    GrowPolicy,
    LossParams,
    TrainConfig,
    model_load,
    model_save,
    train_until_verified,
    verify_samples,
)
from services.cover import (
    AdaptiveParams,
    Cover,
    MajoringPointSet,
    build_adaptive_cover_data,
    build_adaptive_cover_fn,
    build_grid_cover,
    majoring_points_from_cover_data,
    majoring_points_from_cover_fn,
)
from services.errors import MajorantError, VerificationFailedError
from services.geometry import Domain
from services.oracle import FUNCTIONS, dataset_load, dataset_save, generate_dataset, input_columns, resolve_function

load_dotenv()

# Setup Logging
logging.basicConfig(format=C.LOG_FORMAT, level=os.getenv(C.ENV_LOG_LEVEL, C.DEFAULT_LOG_LEVEL).upper())
logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# Option helpers
# -----------------------------------------------------------------------------


def _parse_domain(ctx, param, value):
    """`--domain lo..hi`, once per axis."""
    if not value:
        return None
    bounds = []
    for axis in value:
        try:
            lo, hi = axis.split("..")
            bounds.append((float(lo), float(hi)))
        except ValueError:
            raise click.BadParameter(f"expected 'lo..hi', got '{axis}'")
    try:
        return Domain.from_bounds(bounds)
    except MajorantError as e:
        raise click.BadParameter(str(e))


def domain_option(f):
    return click.option(
        "--domain",
        multiple=True,
        callback=_parse_domain,
        help="Axis bounds as lo..hi, repeated once per axis.",
    )(f)


def function_option(f):
    return click.option("--function", "function", type=click.Choice(sorted(FUNCTIONS)), help="Benchmark function.")(f)


def seed_option(f):
    return click.option("--seed", type=int, default=C.DEFAULT_SEED, show_default=True)(f)


def train_options(f):
    options = [
        click.option("--beta", type=float, default=C.DEFAULT_BETA, show_default=True),
        click.option("--alpha-plus", type=float, default=C.DEFAULT_ALPHA_PLUS, show_default=True),
        click.option("--alpha-minus", type=float, default=C.DEFAULT_ALPHA_MINUS, show_default=True),
        click.option("--p", "p", type=int, default=C.DEFAULT_P, show_default=True),
        click.option("--width", type=int, default=C.DEFAULT_WIDTH, show_default=True),
        click.option("--depth", type=int, default=C.DEFAULT_DEPTH, show_default=True),
        click.option("--theta", type=float, default=C.DEFAULT_THETA, show_default=True),
        click.option("--epochs", type=int, default=C.DEFAULT_EPOCHS, show_default=True),
        click.option("--batch-size", type=int, default=C.DEFAULT_BATCH_SIZE, show_default=True),
        click.option("--learning-rate", type=float, default=None),
        click.option("--optimizer", type=click.Choice(C.OPTIMIZERS), default=C.DEFAULT_OPTIMIZER, show_default=True),
        click.option("--max-retries", type=int, default=C.DEFAULT_MAX_RETRIES, show_default=True),
        click.option("--max-lift-ratio", type=float, default=C.DEFAULT_MAX_LIFT_RATIO, show_default=True),
        click.option("--progress/--no-progress", default=False),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def handles_errors(f):
    """Logs contract violations and exits with status 1."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except MajorantError as e:
            logger.error(str(e))
            click.echo(f"Error: {e}", err=True)
            sys.exit(1)

    return wrapper


def _domain_for(domain: Domain | None, function: str | None) -> Domain:
    if domain is not None:
        return domain
    if function is not None and FUNCTIONS[function].domain is not None:
        return FUNCTIONS[function].domain
    raise click.UsageError("--domain is required here.")


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------


@click.group(help=C.APP_DESCRIPTION)
def cli():
    pass


@cli.command("gen-data")
@function_option
@domain_option
@click.option("-n", "n", type=int, required=True, help="Number of uniform samples.")
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handles_errors
def gen_data(function, domain, n, seed, out):
    """Samples a benchmark function into a dataset CSV."""
    if function is None:
        raise click.UsageError("--function is required.")
    oracle = resolve_function(function, domain)
    data = generate_dataset(oracle, n, seed)
    dataset_save(data, out)
    click.echo(f"{data.n} records written to {out}")


@cli.command()
@function_option
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), help="Dataset CSV (data mode).")
@domain_option
@click.option("--mode", type=click.Choice(C.COVER_MODES), default=C.MODE_GRID, show_default=True)
@click.option("--eps", type=float, default=C.DEFAULT_EPS, show_default=True)
@click.option("--eps-f", type=float, default=C.DEFAULT_EPS_F, show_default=True)
@click.option("--np", "n_p", type=int, default=C.DEFAULT_NP, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handles_errors
def cover(function, data_path, domain, mode, eps, eps_f, n_p, out):
    """Builds a grid or adaptive cover and writes it as JSON."""
    dom = _domain_for(domain, function)
    if mode == C.MODE_GRID:
        result = build_grid_cover(dom, eps)
    elif mode == C.MODE_FUNCTION:
        if function is None:
            raise click.UsageError("--mode function needs --function.")
        result = build_adaptive_cover_fn(dom, resolve_function(function, dom), AdaptiveParams(eps, eps_f, n_p))
    else:
        if data_path is None:
            raise click.UsageError("--mode data needs --data.")
        result = build_adaptive_cover_data(dom, dataset_load(data_path, dom), AdaptiveParams(eps, eps_f, n_p))
    result.save(out)
    click.echo(C.MSG_COVER_BUILT.format(m=result.m, mode=result.mode))


@cli.command()
@click.option("--cover", "cover_path", type=click.Path(exists=True, dir_okay=False), required=True)
@function_option
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Majoring Points CSV.")
@click.option("--cells", type=click.Path(dir_okay=False), help="Also write the annotated cover (f_C) here.")
@handles_errors
def points(cover_path, function, data_path, out, cells):
    """Extracts Majoring Points (a_i, b_i) from a cover, with f or tilde-f."""
    cov = Cover.load(cover_path)
    if function is not None:
        result = majoring_points_from_cover_fn(cov, resolve_function(function, cov.domain))
    elif data_path is not None:
        result = majoring_points_from_cover_data(cov, dataset_load(data_path, cov.domain))
    else:
        raise click.UsageError("Give --function or --data.")
    result.save(out)
    if cells:
        result.cover.save(cells)
    if result.dropped:
        click.echo(C.MSG_DROPPED_CELLS.format(dropped=result.dropped, fraction=result.uncovered_fraction))
    click.echo(f"{result.m} Majoring Points written to {out}")


@cli.command()
@click.option("--points", "points_path", type=click.Path(exists=True, dir_okay=False), required=True)
@domain_option
@train_options
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handles_errors
def train(points_path, domain, beta, alpha_plus, alpha_minus, p, width, depth, theta, epochs, batch_size,
          learning_rate, optimizer, max_retries, max_lift_ratio, progress, seed, out):
    """Trains and verifies a monotone network, growing it on failure."""
    pts = MajoringPointSet.load(points_path)
    cfg = TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        optimizer=optimizer,
        seed=seed,
        width=width,
        depth=depth,
        theta=theta,
        loss=LossParams(beta, alpha_plus, alpha_minus, p),
        grow=GrowPolicy(max_retries=max_retries, max_lift_ratio=max_lift_ratio),
        progress=progress,
    )
    if domain is None and pts.domain is None:
        raise click.UsageError(C.ERR_MSG_NO_DOMAIN)
    try:
        net, report = train_until_verified(pts, cfg, domain)
    except VerificationFailedError as e:
        # keep the best attempt for inspection; its embedded report says FAILED
        model_save(e.net, out)
        raise
    model_save(net, out)
    click.echo(C.MSG_VERIFIED.format(m=report.m, margin=report.min_margin))


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--points", "points_path", type=click.Path(exists=True, dir_okay=False), required=True)
@handles_errors
def verify(model_path, points_path):
    """Checks f_net(a_i) >= b_i on every Majoring Point and embeds the report in the model."""
    net = model_load(model_path)
    pts = MajoringPointSet.load(points_path)
    report = verify_samples(net, pts)
    if net.report is not None:
        report.history = net.report.history
    net.report = report
    model_save(net, model_path)
    if not report.passed:
        message = C.MSG_NOT_VERIFIED.format(violations=report.violations, m=report.m, margin=report.min_margin)
        logger.error(message)
        click.echo(message, err=True)
        sys.exit(1)
    click.echo(C.MSG_VERIFIED.format(m=report.m, margin=report.min_margin))


@cli.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@function_option
@domain_option
@click.option("--points", "points_path", type=click.Path(exists=True, dir_okay=False), help="For the MAE column.")
@click.option("--n-test", type=int, default=C.DEFAULT_N_TEST, show_default=True)
@click.option("--seed", type=int, default=C.DEFAULT_TEST_SEED, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handles_errors
def evaluate(model_path, function, domain, points_path, n_test, seed, out):
    """Scores a model against a benchmark function on uniform test points."""
    if function is None:
        raise click.UsageError("--function is required.")
    net = model_load(model_path)
    oracle = resolve_function(function, _domain_for(domain, function))
    testset: TestSet = make_testset(oracle, n_test, seed)
    row = {
        "method": C.METHOD_ONN,
        "m": None,
        "n_test": testset.n,
        "seed": seed,
        "mae": None,
        "rmse": rmse(net.predict, testset),
        "mean_signed_error": mean_signed_error(net.predict, testset),
        "op_percent": op_metric(net.predict, testset),
        "fg": net.verified,
        "memory_floats": net.parameter_count(),
        "monotonicity_violations": monotonicity_probe(net.predict, oracle.domain, C.DEFAULT_PROBE_PAIRS, seed),
        "baseline_guarantee": None,
    }
    if points_path:
        pts = MajoringPointSet.load(points_path)
        row["m"] = pts.m
        row["mae"] = mae(pts, oracle)
    table = pd.DataFrame([row], columns=C.METRICS_COLUMNS)
    table.to_csv(out, index=False, float_format=C.CSV_FLOAT_FORMAT)
    click.echo(table.to_string(index=False))


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--x", "xs", multiple=True, help="Comma-separated point, repeatable.")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), help="CSV with columns x1..xd.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write predictions as CSV instead of printing.")
@click.option("--extrapolate", is_flag=True, help="Serve points outside the domain, without guarantee.")
@click.option("--unverified", is_flag=True, help="Serve a model that carries no passing certificate.")
@handles_errors
def predict(model_path, xs, input_path, out, extrapolate, unverified):
    """Evaluates a verified model; refuses points outside its domain."""
    net = model_load(model_path)
    if not net.verified:
        if not unverified:
            raise MajorantError(C.ERR_MSG_UNVERIFIED_MODEL)
        logger.warning(C.MSG_UNVERIFIED_PREDICTION)

    if input_path:
        X = pd.read_csv(input_path, comment=C.CSV_COMMENT)[input_columns(net.d)].to_numpy(dtype=np.float64)
    elif xs:
        try:
            X = np.array([[float(v) for v in x.split(",")] for x in xs], dtype=np.float64)
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--x")
    else:
        raise click.UsageError("Give --x or --input.")

    domain = Domain(tuple(net.x_lower), tuple(net.x_upper))
    inside = domain.contains_batch(X)
    for x in X[~inside]:
        if not extrapolate:
            domain.check(x)
        logger.warning(C.MSG_EXTRAPOLATION.format(point=x.tolist()))

    values = net.predict(X)
    if out:
        df = pd.DataFrame(X, columns=input_columns(net.d))
        df[C.COL_TARGET] = values
        df.to_csv(out, index=False, float_format=C.CSV_FLOAT_FORMAT)
    else:
        for v in values:
            click.echo(repr(float(v)))


@cli.command()
@click.argument("spec_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (overrides the spec's).")
@handles_errors
def run(spec_path, out):
    """Runs an experiment spec end to end and writes metrics.csv."""
    table = run_experiment(spec_path, out)
    click.echo(table.to_string(index=False))


if __name__ == "__main__":
    cli()
