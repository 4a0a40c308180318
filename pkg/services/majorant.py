"""
Lookup-table surrogate f_C(x) = min of the stored upper values over the cells
containing x. It over-estimates f wherever its cover has a finite value.
"""

import logging

import numpy as np

import constants as C
from services.cover import Cover, MajoringPointSet
from services.errors import MajorantError, UncoveredPointError
from services.geometry import Domain, as_points, child_corners, contains_mask

logger = logging.getLogger(__name__)


class _SplitTree:
    """Dyadic split tree rebuilt from the cells' split paths, for O(depth) lookup."""

    def __init__(self, cover: Cover):
        d = cover.d
        n_children = 2 ** d
        lower = [cover.domain.lower]
        upper = [cover.domain.upper]
        children = [np.full(n_children, -1, dtype=np.int64)]
        leaf = [-1]
        for cell, path in enumerate(cover.paths):
            node = 0
            for code in path:
                nxt = children[node][code]
                if nxt < 0:
                    lo, hi = child_corners(lower[node], upper[node], code)
                    nxt = len(lower)
                    children[node][code] = nxt
                    lower.append(lo)
                    upper.append(hi)
                    children.append(np.full(n_children, -1, dtype=np.int64))
                    leaf.append(-1)
                node = nxt
            leaf[node] = cell
        self.lower = np.array(lower)
        self.upper = np.array(upper)
        self.children = np.array(children)
        self.leaf = np.array(leaf, dtype=np.int64)
        self.internal = self.leaf < 0
        self.bits = 1 << np.arange(d)

    def locate(self, A: np.ndarray) -> np.ndarray:
        node = np.zeros(A.shape[0], dtype=np.int64)
        active = self.internal[node]
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            lo, hi = self.lower[n], self.upper[n]
            mid = lo + (hi - lo) / 2
            code = ((A[idx] >= mid) * self.bits).sum(axis=1)
            node[idx] = self.children[n, code]
            active = self.internal[node]
        return self.leaf[node]


class LookupSurrogate:
    """
    f_C over an annotated cover. Cells whose value is unknown (NaN) are
    stored but never returned.
    """

    def __init__(self, cover: Cover):
        if cover.b is None:
            raise MajorantError(C.ERR_MSG_COVER_NOT_ANNOTATED)
        self.cover = cover
        self._tree = None
        if cover.mode == C.MODE_GRID and cover.edges is not None:
            self._strategy = "grid"
        elif cover.paths is not None:
            self._strategy = "tree"
            self._tree = _SplitTree(cover)
        else:
            self._strategy = "scan"
        logger.info(f"Lookup surrogate over {cover.m} cells ({self._strategy} lookup)")

    @classmethod
    def from_points(cls, points: MajoringPointSet) -> "LookupSurrogate":
        if points.cover is None:
            raise MajorantError(C.ERR_MSG_COVER_NOT_ANNOTATED)
        return cls(points.cover)

    @property
    def domain(self) -> Domain:
        return self.cover.domain

    @property
    def stored_cells(self) -> int:
        return int(np.count_nonzero(np.isfinite(self.cover.b)))

    def _checked(self, X) -> np.ndarray:
        A = as_points(X, self.domain.d)
        inside = self.domain.contains_batch(A)
        if not np.all(inside):
            self.domain.check(A[np.argmin(inside)])
        return A

    def _grid_cells(self, A: np.ndarray) -> np.ndarray:
        edges = self.cover.edges
        n_max = edges[0].shape[0] - 1
        flat = np.zeros(A.shape[0], dtype=np.int64)
        for k in range(A.shape[1]):
            i = np.searchsorted(edges[k], A[:, k], side="right") - 1
            flat = flat * n_max + np.clip(i, 0, n_max - 1)
        return flat

    def evaluate_naive(self, x) -> float:
        """Minimum over every containing cell, by full scan."""
        p = self.domain.check(x)
        hits = contains_mask(self.cover.lower, self.cover.upper, self.cover.closed, p)
        values = self.cover.b[hits]
        values = values[np.isfinite(values)]
        if values.size == 0:
            raise UncoveredPointError(C.ERR_MSG_UNCOVERED.format(point=p.tolist()))
        return float(values.min())

    def _lookup(self, A: np.ndarray) -> np.ndarray:
        cells = self._grid_cells(A) if self._strategy == "grid" else self._tree.locate(A)
        return self.cover.b[cells]

    def covered(self, X) -> np.ndarray:
        """Mask of the points with a finite value (all of them unless data-mode cells were dropped)."""
        A = self._checked(X)
        if self._strategy == "scan":
            return np.array(
                [np.isfinite(self.cover.b[contains_mask(self.cover.lower, self.cover.upper, self.cover.closed, x)]).any() for x in A],
                dtype=bool,
            )
        return np.isfinite(self._lookup(A))

    def evaluate_batch(self, X) -> np.ndarray:
        A = self._checked(X)
        if self._strategy == "scan":
            return np.array([self.evaluate_naive(x) for x in A])
        values = self._lookup(A)
        missing = ~np.isfinite(values)
        if missing.any():
            raise UncoveredPointError(C.ERR_MSG_UNCOVERED.format(point=A[np.argmax(missing)].tolist()))
        return values

    def evaluate(self, x) -> float:
        return float(self.evaluate_batch(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])

    def __call__(self, X) -> np.ndarray:
        return self.evaluate_batch(X)


def fc_eval(s: LookupSurrogate, x) -> float:
    return s.evaluate(x)


def fc_memory_footprint(s: LookupSurrogate, include_domain: bool = True) -> int:
    """Stored floats: m (d + 1) for the point table, plus 2d for the domain box."""
    d = s.domain.d
    count = s.stored_cells * (d + 1)
    return count + 2 * d if include_domain else count
