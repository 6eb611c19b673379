"""Piecewise-linear nonsingular interval maps and the built-in catalog.

A map is a list of affine branches over half-open domains that partition
[0, 1).  Branch data is exact rational, so branch images, preimages and
derivative moduli are exact; the catalog maps are dyadic and therefore
float-exact as well.

Catalog:
    doubling   2x mod 1, two full branches of slope 2
    buzzi_t1   four branches of slope 2 leaving [0, 1/2) and [1/2, 1) invariant
    identity   one branch of slope 1
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .stepfn import PointLike, as_fraction

_PARTITION_TOL = Fraction(1, 10**12)


@dataclass(frozen=True)
class Branch:
    lo: Fraction
    hi: Fraction
    slope: Fraction
    intercept: Fraction

    def __call__(self, x: Fraction) -> Fraction:
        return self.slope * x + self.intercept

    def image_bounds(self) -> tuple[Fraction, Fraction]:
        a, b = self(self.lo), self(self.hi)
        return (a, b) if a <= b else (b, a)

    def preimage(self, y: Fraction) -> Fraction | None:
        x = (y - self.intercept) / self.slope
        return x if self.lo <= x < self.hi else None


class PiecewiseLinearMap:
    """Piecewise-affine map of [0, 1) with exact rational branch data."""

    def __init__(self, name: str, branches: Iterable[tuple[PointLike, PointLike, PointLike, PointLike]]):
        brs = [
            Branch(as_fraction(lo), as_fraction(hi), as_fraction(s), as_fraction(c))
            for lo, hi, s, c in branches
        ]
        brs.sort(key=lambda b: b.lo)
        if not brs:
            raise ValueError("map needs at least one branch")
        if brs[0].lo != 0 or brs[-1].hi != 1:
            raise ValueError(f"{name}: branch domains must start at 0 and end at 1")
        total = Fraction(0)
        for i, b in enumerate(brs):
            if b.hi <= b.lo:
                raise ValueError(f"{name}: empty branch domain [{b.lo}, {b.hi})")
            if i > 0 and b.lo != brs[i - 1].hi:
                raise ValueError(f"{name}: branch domains must partition [0, 1); gap at {b.lo}")
            if b.slope == 0:
                raise ValueError(f"{name}: zero slope branch at [{b.lo}, {b.hi})")
            img_lo, img_hi = b.image_bounds()
            if img_lo < -_PARTITION_TOL or img_hi > 1 + _PARTITION_TOL:
                raise ValueError(f"{name}: branch image [{img_lo}, {img_hi}] leaves [0, 1]")
            total += b.hi - b.lo
        if abs(total - 1) > _PARTITION_TOL:
            raise ValueError(f"{name}: branch domains cover {total}, not 1")
        self.name = name
        self.branches = tuple(brs)
        self._tables = None

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    @property
    def min_expansion(self) -> float:
        """lambda(T) = min |slope| over branches."""
        return float(min(abs(b.slope) for b in self.branches))

    def __call__(self, x: PointLike) -> Fraction:
        x = as_fraction(x)
        if not (0 <= x < 1):
            raise ValueError(f"point {x} outside [0, 1)")
        for b in self.branches:
            if b.lo <= x < b.hi:
                return b(x)
        raise AssertionError("unreachable: branches partition [0, 1)")

    def preimages(self, y: PointLike) -> list[tuple[Fraction, Fraction]]:
        """All (x, |T'(x)|) with T(x) = y, ordered by x.  Exact."""
        y = as_fraction(y)
        if not (0 <= y < 1):
            raise ValueError(f"point {y} outside [0, 1)")
        out = []
        for b in self.branches:
            x = b.preimage(y)
            if x is not None:
                out.append((x, abs(b.slope)))
        out.sort(key=lambda p: p[0])
        return out

    def float_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(domain left endpoints, slopes, intercepts) for vectorized orbits."""
        if self._tables is None:
            lefts = np.array([float(b.lo) for b in self.branches])
            slopes = np.array([float(b.slope) for b in self.branches])
            icpts = np.array([float(b.intercept) for b in self.branches])
            self._tables = (lefts, slopes, icpts)
        return self._tables

    def __repr__(self):
        return f"PiecewiseLinearMap({self.name!r}, {self.branch_count} branches)"

    def __eq__(self, other):
        if not isinstance(other, PiecewiseLinearMap):
            return NotImplemented
        return self.branches == other.branches

    def __hash__(self):
        return hash(self.branches)


def doubling() -> PiecewiseLinearMap:
    return PiecewiseLinearMap("doubling", [(0, "1/2", 2, 0), ("1/2", 1, 2, -1)])


def buzzi_t1() -> PiecewiseLinearMap:
    """Slope-2 map with invariant halves: doubling dynamics inside each half."""
    return PiecewiseLinearMap(
        "buzzi_t1",
        [
            (0, "1/4", 2, 0),
            ("1/4", "1/2", 2, "-1/2"),
            ("1/2", "3/4", 2, "-1/2"),
            ("3/4", 1, 2, -1),
        ],
    )


def identity_map() -> PiecewiseLinearMap:
    return PiecewiseLinearMap("identity", [(0, 1, 1, 0)])


def custom_map(name: str, branches: Sequence[Sequence[PointLike]]) -> PiecewiseLinearMap:
    return PiecewiseLinearMap(name, [tuple(b) for b in branches])


def catalog() -> dict[str, PiecewiseLinearMap]:
    return {
        "doubling": doubling(),
        "buzzi_t1": buzzi_t1(),
        "identity": identity_map(),
    }
