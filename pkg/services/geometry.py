"""
Partial order on R^d, half-open hyper-rectangles and their dyadic split.

Every guarantee downstream rests on this module being exact: children of a
split share the parent's corners bit-for-bit, and membership is half-open
except along the top face of the domain, which is treated as closed so the
closed box is covered.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

import constants as C
from services.errors import (
    DegenerateRectangleError,
    DimensionMismatchError,
    DomainError,
    MajorantError,
)


def as_point(x, d: int | None = None) -> np.ndarray:
    """Converts `x` to a finite float64 vector, optionally checking its dimension."""
    p = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if p.ndim != 1:
        raise DomainError(C.ERR_MSG_NON_FINITE.format(point=x))
    if d is not None and p.shape[0] != d:
        raise DimensionMismatchError(d, p.shape[0])
    if not np.all(np.isfinite(p)):
        raise DomainError(C.ERR_MSG_NON_FINITE.format(point=p.tolist()))
    return p


def as_points(X, d: int | None = None) -> np.ndarray:
    """Same as `as_point` for a batch; 1-D input is read as one point per row when d == 1."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1) if d == 1 else A.reshape(1, -1)
    if d is not None and A.shape[1] != d:
        raise DimensionMismatchError(d, A.shape[1])
    if not np.all(np.isfinite(A)):
        raise DomainError(C.ERR_MSG_NON_FINITE.format(point="batch"))
    return A


def partial_le(x, x_prime) -> bool:
    """x <= x' iff x_k <= x'_k for every k."""
    a = as_point(x)
    b = as_point(x_prime, a.shape[0])
    return bool(np.all(a <= b))


@dataclass(frozen=True)
class HyperRectangle:
    """The half-open box [lower, upper)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = as_point(self.lower)
        hi = as_point(self.upper, lo.shape[0])
        if not np.all(lo <= hi):
            raise MajorantError(
                C.ERR_MSG_BAD_RECTANGLE.format(lower=lo.tolist(), upper=hi.tolist())
            )
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @classmethod
    def from_arrays(cls, lower: np.ndarray, upper: np.ndarray) -> "HyperRectangle":
        return cls(tuple(lower.tolist()), tuple(upper.tolist()))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.array(self.lower, dtype=np.float64)

    @property
    def upper_array(self) -> np.ndarray:
        return np.array(self.upper, dtype=np.float64)

    def volume(self) -> float:
        return float(np.prod(self.upper_array - self.lower_array))


@dataclass(frozen=True)
class Domain:
    """The compact box [y_min, y_max] the guarantee is stated on."""

    y_min: tuple[float, ...]
    y_max: tuple[float, ...]

    def __post_init__(self):
        lo = as_point(self.y_min)
        hi = as_point(self.y_max, lo.shape[0])
        if not np.all(lo < hi):
            raise MajorantError(
                C.ERR_MSG_BAD_DOMAIN.format(y_min=lo.tolist(), y_max=hi.tolist())
            )
        object.__setattr__(self, "y_min", tuple(float(v) for v in lo))
        object.__setattr__(self, "y_max", tuple(float(v) for v in hi))

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]]) -> "Domain":
        """Builds a domain from per-axis (low, high) pairs."""
        return cls(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @classmethod
    def cube(cls, low: float, high: float, d: int) -> "Domain":
        return cls((low,) * d, (high,) * d)

    @property
    def d(self) -> int:
        return len(self.y_min)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.y_min, dtype=np.float64)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.y_max, dtype=np.float64)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def box(self) -> HyperRectangle:
        return HyperRectangle(self.y_min, self.y_max)

    def volume(self) -> float:
        return float(np.prod(self.span))

    def contains(self, x) -> bool:
        p = as_point(x, self.d)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def contains_batch(self, X) -> np.ndarray:
        A = as_points(X, self.d)
        return np.all((A >= self.lower) & (A <= self.upper), axis=1)

    def check(self, x) -> np.ndarray:
        p = as_point(x, self.d)
        if not self.contains(p):
            raise DomainError(
                C.ERR_MSG_OUT_OF_DOMAIN.format(
                    point=p.tolist(), y_min=list(self.y_min), y_max=list(self.y_max)
                )
            )
        return p

    def to_dict(self) -> dict:
        return {"y_min": list(self.y_min), "y_max": list(self.y_max)}

    @classmethod
    def from_dict(cls, payload: dict) -> "Domain":
        return cls(tuple(payload["y_min"]), tuple(payload["y_max"]))


def rect_contains(rect: HyperRectangle, x, closed_upper=None) -> bool:
    """
    Half-open membership lower <= x < upper.

    `closed_upper` optionally marks axes whose upper face is closed (the
    topmost cells of a cover, see `Cover.closed`).
    """
    p = as_point(x, rect.d)
    lo, hi = rect.lower_array, rect.upper_array
    below_top = p < hi
    if closed_upper is not None:
        below_top = below_top | (np.asarray(closed_upper, dtype=bool) & (p == hi))
    return bool(np.all(lo <= p) and np.all(below_top))


def contains_mask(lower: np.ndarray, upper: np.ndarray, closed: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Vectorized `rect_contains` of one point against m cells given as (m, d) arrays."""
    below_top = (x < upper) | (closed & (x == upper))
    return np.all((lower <= x) & below_top, axis=1)


def midpoint(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    # y + (y' - y) / 2, never (y + y') / 2
    return lower + (upper - lower) / 2


def child_corners(lower: np.ndarray, upper: np.ndarray, code: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Corners of the child of [lower, upper) with index `code`.

    Bit k of `code` is s_k: 0 keeps the lower half of axis k, 1 the upper half.
    Faces shared with the parent are copied, not recomputed, so the children
    tile the parent exactly.
    """
    mid = midpoint(lower, upper)
    s = ((code >> np.arange(lower.shape[0])) & 1).astype(bool)
    return np.where(s, mid, lower), np.where(s, upper, mid)


def child(rect: HyperRectangle, code: int) -> HyperRectangle:
    lo, hi = child_corners(rect.lower_array, rect.upper_array, code)
    return HyperRectangle.from_arrays(lo, hi)


def is_splittable(lower: np.ndarray, upper: np.ndarray) -> bool:
    mid = midpoint(lower, upper)
    return bool(np.all(lower < mid) and np.all(mid < upper))


def decompose(rect: HyperRectangle) -> list[HyperRectangle]:
    """
    Dyadic split of `rect` into its 2^d children, ordered by child index
    (first coordinate varies fastest).

    Raises:
        DegenerateRectangleError: if some side has zero length, or is too
            short for its midpoint to be distinct from both ends.
    """
    lo, hi = rect.lower_array, rect.upper_array
    if not is_splittable(lo, hi):
        raise DegenerateRectangleError(
            C.ERR_MSG_DEGENERATE.format(lower=list(rect.lower), upper=list(rect.upper))
        )
    return [child(rect, code) for code in range(2 ** rect.d)]


def linf_diameter(rect: HyperRectangle) -> float:
    return float(np.max(rect.upper_array - rect.lower_array))
