"""
Covers of the domain and the Majoring Points they define.

A cover is built either as a uniform grid or by the dichotomy algorithm,
which splits a cell dyadically until it passes an accuracy test. Each cell
[y, y') then yields the Majoring Point (y, f(y')) (or tilde-f(y') when only
a dataset is known): any non-decreasing g with g(y) >= f(y') on every cell
over-estimates f on the whole domain.
"""

import json
import logging
import math
import os
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import pandas as pd

import constants as C
from services.errors import (
    CellBudgetExceededError,
    MajorantError,
    NoFiniteMajoringPointsError,
)
from services.geometry import (
    Domain,
    child_corners,
    contains_mask,
    is_splittable,
)
from services.oracle import DataOracle, Dataset, FunctionOracle, input_columns

logger = logging.getLogger(__name__)


def default_cell_budget() -> int:
    return int(os.getenv(C.ENV_CELL_BUDGET, C.DEFAULT_CELL_BUDGET))


@dataclass(frozen=True)
class AdaptiveParams:
    eps: float
    eps_f: float
    n_p: int = C.DEFAULT_NP

    def __post_init__(self):
        if not (self.eps > 0 and self.eps_f >= 0 and self.n_p >= 0):
            # eps_f = 0 is allowed: it forces splitting down to the eps floor
            raise MajorantError(
                C.ERR_MSG_BAD_PARAMS.format(
                    detail=f"eps={self.eps}, eps_f={self.eps_f}, n_p={self.n_p}"
                )
            )

    def to_dict(self) -> dict:
        return {"eps": self.eps, "eps_f": self.eps_f, "n_p": self.n_p}


@dataclass
class Cover:
    """
    Cells [lower_i, upper_i) whose union contains the closed domain box.

    `b` optionally annotates every cell with its upper value (NaN for a cell
    whose value is unknown, +inf never stored). `edges` (grid) and `paths`
    (dyadic split codes from the root) are lookup metadata.
    """

    domain: Domain
    lower: np.ndarray
    upper: np.ndarray
    mode: str
    params: dict = field(default_factory=dict)
    b: np.ndarray | None = None
    edges: list[np.ndarray] | None = None
    paths: list[tuple[int, ...]] | None = None
    rounds: int = 0

    @property
    def m(self) -> int:
        return int(self.lower.shape[0])

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def closed(self) -> np.ndarray:
        return self.upper == self.domain.upper

    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    def containing(self, x: np.ndarray) -> np.ndarray:
        """Indices of every cell containing x (brute force)."""
        return np.flatnonzero(contains_mask(self.lower, self.upper, self.closed, x))

    def annotate(self, b: np.ndarray) -> "Cover":
        return replace(self, b=np.asarray(b, dtype=np.float64))

    def to_dict(self) -> dict:
        cells = []
        for i in range(self.m):
            cell = {"lower": self.lower[i].tolist(), "upper": self.upper[i].tolist()}
            bi = None if self.b is None or not np.isfinite(self.b[i]) else float(self.b[i])
            cell["b"] = bi
            if self.paths is not None:
                cell["path"] = list(self.paths[i])
            cells.append(cell)
        return {
            "d": self.d,
            "mode": self.mode,
            "params": self.params,
            "domain": self.domain.to_dict(),
            "rounds": self.rounds,
            "cells": cells,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, payload: dict) -> "Cover":
        try:
            domain = Domain.from_dict(payload["domain"])
            cells = payload["cells"]
            lower = np.array([c["lower"] for c in cells], dtype=np.float64).reshape(-1, domain.d)
            upper = np.array([c["upper"] for c in cells], dtype=np.float64).reshape(-1, domain.d)
            raw_b = [c.get("b") for c in cells]
            b = None
            if any(v is not None for v in raw_b):
                b = np.array([np.nan if v is None else v for v in raw_b], dtype=np.float64)
            paths = None
            if cells and all("path" in c for c in cells):
                paths = [tuple(int(s) for s in c["path"]) for c in cells]
            params = dict(payload.get("params", {}))
            mode = payload["mode"]
        except (KeyError, TypeError, ValueError) as e:
            raise MajorantError(C.ERR_MSG_PARSE.format(path="cover", error=e))
        edges = None
        if mode == C.MODE_GRID and "n_max" in params:
            edges = grid_edges(domain, int(params["n_max"]))
        return cls(domain, lower, upper, mode, params, b, edges, paths, int(payload.get("rounds", 0)))

    @classmethod
    def load(cls, path) -> "Cover":
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise MajorantError(C.ERR_MSG_PARSE.format(path=path, error=e))
        return cls.from_dict(payload)


def _lexicographic(lower: np.ndarray) -> np.ndarray:
    # first coordinate is the primary key
    return np.lexsort(lower.T[::-1])


# ---------------------------------------------------------
# GRID
# ---------------------------------------------------------


def grid_size(domain: Domain, eps: float) -> int:
    """n_max = ceil(||y_max - y_min||_inf / eps)."""
    if not eps > 0:
        raise MajorantError(C.ERR_MSG_BAD_PARAMS.format(detail=f"eps must be > 0, got {eps}"))
    ratio = float(np.max(domain.span)) / eps
    nearest = round(ratio)
    if nearest >= 1 and math.isclose(ratio, nearest, rel_tol=1e-12):
        return int(nearest)
    return max(1, math.ceil(ratio))


def grid_edges(domain: Domain, n_max: int) -> list[np.ndarray]:
    """Per-axis edges y_min + span * i / n_max, i = 0..n_max, last edge pinned to y_max."""
    steps = np.arange(n_max + 1, dtype=np.float64)
    edges = []
    for lo, hi, span in zip(domain.lower, domain.upper, domain.span):
        e = lo + (span * steps) / n_max
        e[-1] = hi
        edges.append(e)
    return edges


def build_grid_cover(domain: Domain, eps: float, cell_budget: int | None = None) -> Cover:
    """
    Uniform grid of n_max^d cells tiling the box, cell sides r = span / n_max.

    Raises:
        CellBudgetExceededError: if n_max^d is above the budget.
    """
    n_max = grid_size(domain, eps)
    budget = cell_budget or default_cell_budget()
    total = n_max ** domain.d
    if total > budget:
        raise CellBudgetExceededError(total, budget)
    edges = grid_edges(domain, n_max)
    # C order over (i_0, ..., i_{d-1}) is lexicographic by lower corner
    idx = np.indices((n_max,) * domain.d).reshape(domain.d, -1).T
    lower = np.column_stack([edges[k][idx[:, k]] for k in range(domain.d)])
    upper = np.column_stack([edges[k][idx[:, k] + 1] for k in range(domain.d)])
    logger.info(f"Grid cover: n_max={n_max}, {total} cells")
    return Cover(
        domain,
        lower,
        upper,
        C.MODE_GRID,
        {"eps": eps, "n_max": n_max},
        edges=edges,
    )


# ---------------------------------------------------------
# DICHOTOMY ALGORITHM
# ---------------------------------------------------------


def max_rounds(domain: Domain, eps: float) -> int:
    """Splitting rounds after which every cell is below eps: ceil(log2(||span||_inf / eps))."""
    ratio = float(np.max(domain.span)) / eps
    if ratio <= 1.0:
        return 0
    return math.ceil(math.log2(ratio))


def _dichotomy(
    domain: Domain,
    accurate: Callable[[np.ndarray, np.ndarray], bool],
    params: AdaptiveParams,
    mode: str,
    cell_budget: int | None,
) -> Cover:
    """
    Work-queue form of the adaptive cover construction: a cell is kept once
    it passes `accurate`, once its l-inf diameter is <= eps, or once it has
    been split the maximal number of rounds; otherwise it is replaced by its
    2^d dyadic children.
    """
    budget = cell_budget or default_cell_budget()
    n_rounds = max_rounds(domain, params.eps)
    n_children = 2 ** domain.d
    queue = deque([(domain.lower, domain.upper, ())])
    leaves_lo, leaves_hi, paths = [], [], []
    rounds = 0

    while queue:
        lo, hi, path = queue.popleft()
        depth = len(path)
        done = (
            depth >= n_rounds
            or float(np.max(hi - lo)) <= params.eps
            or not is_splittable(lo, hi)
            or accurate(lo, hi)
        )
        if done:
            leaves_lo.append(lo)
            leaves_hi.append(hi)
            paths.append(path)
            continue
        if len(leaves_lo) + len(queue) + n_children > budget:
            raise CellBudgetExceededError(len(leaves_lo) + len(queue) + n_children, budget)
        rounds = max(rounds, depth + 1)
        for code in range(n_children):
            c_lo, c_hi = child_corners(lo, hi, code)
            queue.append((c_lo, c_hi, path + (code,)))

    lower = np.array(leaves_lo).reshape(-1, domain.d)
    upper = np.array(leaves_hi).reshape(-1, domain.d)
    order = _lexicographic(lower)
    cover = Cover(
        domain,
        lower[order],
        upper[order],
        mode,
        params.to_dict(),
        paths=[paths[i] for i in order],
        rounds=rounds,
    )
    logger.info(f"Adaptive cover ({mode}): {cover.m} cells after {rounds} rounds")
    return cover


def build_adaptive_cover_fn(
    domain: Domain, oracle: FunctionOracle, params: AdaptiveParams, cell_budget: int | None = None
) -> Cover:
    """Dichotomy algorithm with the oracle test f(y') - f(y) <= eps_f."""

    def accurate(lo: np.ndarray, hi: np.ndarray) -> bool:
        return oracle.evaluate(hi) - oracle.evaluate(lo) <= params.eps_f

    return _dichotomy(domain, accurate, params, C.MODE_FUNCTION, cell_budget)


def build_adaptive_cover_data(
    domain: Domain, data: Dataset, params: AdaptiveParams, cell_budget: int | None = None
) -> Cover:
    """
    Dichotomy algorithm with the dataset test: tilde-f variation <= eps_f, or
    at most n_p samples inside the cell. A cell whose two corners both have
    no dominating sample shows no variation (inf - inf is read as 0).
    """
    tilde = DataOracle(data)
    top = domain.upper

    def accurate(lo: np.ndarray, hi: np.ndarray) -> bool:
        if tilde.count_inside(lo, hi, hi == top) <= params.n_p:
            return True
        f_hi, f_lo = tilde.evaluate(hi), tilde.evaluate(lo)
        variation = 0.0 if math.isinf(f_hi) and math.isinf(f_lo) else f_hi - f_lo
        return variation <= params.eps_f

    return _dichotomy(domain, accurate, params, C.MODE_DATA, cell_budget)


# ---------------------------------------------------------
# MAJORING POINTS
# ---------------------------------------------------------


@dataclass
class MajoringPointSet:
    """
    Pairs (a_i, b_i); `dropped` cells had no finite upper value.

    `domain` is the box the points certify, taken from the cover when there
    is one. The CSV keeps it in a `# domain` header line.
    """

    a: np.ndarray
    b: np.ndarray
    source: str
    cover: Cover | None = None
    dropped: int = 0
    uncovered_fraction: float = 0.0
    domain: Domain | None = None

    def __post_init__(self):
        if self.domain is None and self.cover is not None:
            self.domain = self.cover.domain

    @property
    def m(self) -> int:
        return int(self.b.shape[0])

    @property
    def d(self) -> int:
        return int(self.a.shape[1])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.a, columns=input_columns(self.d, C.COL_POINT_PREFIX))
        df[C.COL_BOUND] = self.b
        return df

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            if self.domain is not None:
                axes = " ".join(f"{float(lo)!r}..{float(hi)!r}" for lo, hi in zip(self.domain.y_min, self.domain.y_max))
                f.write(f"{C.POINTS_DOMAIN_HEADER} {axes}\n")
            self.to_frame().to_csv(f, index=False, float_format=C.CSV_FLOAT_FORMAT)

    @classmethod
    def load(cls, path, source: str = "file") -> "MajoringPointSet":
        try:
            domain = _read_domain_header(path)
            df = pd.read_csv(path, comment=C.CSV_COMMENT)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise MajorantError(C.ERR_MSG_PARSE.format(path=path, error=e))
        d = df.shape[1] - 1
        expected = input_columns(d, C.COL_POINT_PREFIX) + [C.COL_BOUND]
        if d < 1 or list(df.columns) != expected:
            raise MajorantError(C.ERR_MSG_COLUMNS.format(path=path, expected=expected, found=list(df.columns)))
        values = df.to_numpy(dtype=np.float64)
        if values.shape[0] == 0 or not np.all(np.isfinite(values)):
            raise MajorantError(C.ERR_MSG_PARSE.format(path=path, error="empty or non-finite values"))
        if domain is not None and domain.d != d:
            raise MajorantError(C.ERR_MSG_PARSE.format(path=path, error=f"domain header has {domain.d} axes, points have {d}"))
        return cls(values[:, :-1], values[:, -1], source, domain=domain)


def _read_domain_header(path) -> Domain | None:
    """Parses `# domain lo..hi lo..hi ...` from the leading comment lines, if any."""
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith(C.CSV_COMMENT):
                return None
            if not line.startswith(C.POINTS_DOMAIN_HEADER):
                continue
            try:
                bounds = [tuple(float(v) for v in axis.split("..")) for axis in line[len(C.POINTS_DOMAIN_HEADER):].split()]
                if not bounds or any(len(b) != 2 for b in bounds):
                    raise ValueError(line.strip())
                return Domain.from_bounds(bounds)
            except ValueError as e:
                raise MajorantError(C.ERR_MSG_PARSE.format(path=path, error=f"bad domain header {e}"))
    return None


def _points_from_bounds(cover: Cover, upper_values: np.ndarray) -> MajoringPointSet:
    finite = np.isfinite(upper_values)
    dropped = int(np.count_nonzero(~finite))
    if not finite.any():
        raise NoFiniteMajoringPointsError(C.ERR_MSG_NO_FINITE_POINTS)
    fraction = float(cover.volumes()[~finite].sum() / cover.domain.volume()) if dropped else 0.0
    if dropped:
        logger.warning(C.MSG_DROPPED_CELLS.format(dropped=dropped, fraction=fraction))
    annotated = cover.annotate(np.where(finite, upper_values, np.nan))
    return MajoringPointSet(
        cover.lower[finite].copy(),
        upper_values[finite].copy(),
        cover.mode,
        annotated,
        dropped,
        fraction,
    )


def majoring_points_from_cover_fn(cover: Cover, oracle: FunctionOracle) -> MajoringPointSet:
    """(a_i, b_i) = (y_i, f(y'_i)) for every cell."""
    return _points_from_bounds(cover, oracle.evaluate_many(cover.upper))


def majoring_points_from_cover_data(cover: Cover, data: Dataset) -> MajoringPointSet:
    """
    (a_i, b_i) = (y_i, tilde-f(y'_i)); cells with no dominating sample above
    them are dropped and counted.

    Raises:
        NoFiniteMajoringPointsError: if every cell is dropped.
    """
    tilde = DataOracle(data)
    return _points_from_bounds(cover, np.array([tilde.evaluate(y) for y in cover.upper]))
