"""Exact step-function calculus on [0, 1).

A :class:`StepFunction` is right-continuous and piecewise constant with
strictly increasing rational breakpoints in (0, 1).  Piecewise-linear
interval maps push step functions to step functions, so every norm,
integral and operator identity downstream can be evaluated without
discretization error: breakpoints are ``fractions.Fraction`` throughout,
values are Python scalars (float, int, Fraction or complex).

The variation of a step function is the sum of its absolute interior
jumps; the associated lattice of inequalities (homogeneity, triangle
inequality, sup bounded by l1 + variation with constant 1, the product
rules) is exercised by the test suite on random inputs.
"""

from __future__ import annotations

from bisect import bisect_right
from fractions import Fraction
from math import fsum
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence, Union

import cmath

import numpy as np

PointLike = Union[int, float, Fraction, str]
Scalar = Union[int, float, Fraction, complex]

ZERO = Fraction(0)
ONE = Fraction(1)


def as_fraction(x: PointLike) -> Fraction:
    """Exact conversion; floats convert losslessly to their binary value."""
    if isinstance(x, Fraction):
        return x
    return Fraction(x)


def _sum_scalars(terms: Sequence[Scalar]) -> Scalar:
    """Order-robust sum: exact for rationals, fsum for floats, split for complex."""
    if not terms:
        return 0.0
    if any(isinstance(t, complex) for t in terms):
        return complex(fsum(t.real for t in terms), fsum(t.imag for t in terms))
    if all(isinstance(t, (int, Fraction)) for t in terms):
        return sum(terms)
    return fsum(float(t) for t in terms)


class BVNorms(NamedTuple):
    l1: float
    variation: float
    bv: float
    sup: float


class StepFunction:
    """Right-continuous step function on [0, 1) with exact breakpoints."""

    __slots__ = ("breakpoints", "values", "_float_cache")

    def __init__(self, breakpoints: Iterable[PointLike], values: Iterable[Scalar]):
        bps = tuple(as_fraction(b) for b in breakpoints)
        vals = tuple(values)
        if len(vals) != len(bps) + 1:
            raise ValueError(
                f"need {len(bps) + 1} values for {len(bps)} breakpoints, got {len(vals)}"
            )
        for i, b in enumerate(bps):
            if not (ZERO < b < ONE):
                raise ValueError(f"breakpoint {b} outside (0, 1)")
            if i > 0 and bps[i - 1] >= b:
                raise ValueError("breakpoints must be strictly increasing")
        # canonical form: merge exactly-equal neighbours
        if any(vals[i] == vals[i + 1] for i in range(len(bps))):
            kb, kv = [], [vals[0]]
            for i, b in enumerate(bps):
                if vals[i + 1] != kv[-1]:
                    kb.append(b)
                    kv.append(vals[i + 1])
            bps, vals = tuple(kb), tuple(kv)
        self.breakpoints = bps
        self.values = vals
        self._float_cache = None

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, c: Scalar) -> "StepFunction":
        return cls((), (c,))

    @classmethod
    def indicator(cls, lo: PointLike, hi: PointLike) -> "StepFunction":
        """Indicator of the half-open interval [lo, hi) inside [0, 1)."""
        a, b = as_fraction(lo), as_fraction(hi)
        if not (ZERO <= a < b <= ONE):
            raise ValueError(f"invalid interval [{a}, {b})")
        bps, vals = [], []
        if a > ZERO:
            bps.append(a)
            vals.append(0)
        vals.append(1)
        if b < ONE:
            bps.append(b)
            vals.append(0)
        return cls(bps, vals)

    # -- basic queries -------------------------------------------------

    @property
    def piece_count(self) -> int:
        return len(self.values)

    def pieces(self) -> Iterator[tuple[Fraction, Fraction, Scalar]]:
        pts = (ZERO,) + self.breakpoints + (ONE,)
        for i, v in enumerate(self.values):
            yield pts[i], pts[i + 1], v

    def widths(self) -> tuple[Fraction, ...]:
        pts = (ZERO,) + self.breakpoints + (ONE,)
        return tuple(pts[i + 1] - pts[i] for i in range(len(self.values)))

    def __call__(self, x: PointLike) -> Scalar:
        if not (0 <= x < 1):
            raise ValueError(f"point {x} outside [0, 1)")
        return self.values[bisect_right(self.breakpoints, x)]

    def is_real(self) -> bool:
        return not any(isinstance(v, complex) for v in self.values)

    # -- norms and integrals --------------------------------------------

    def integral(self) -> Scalar:
        return _sum_scalars([v * w for v, w in zip(self.values, self.widths())])

    def l1_norm(self) -> float:
        return float(_sum_scalars([abs(v) * w for v, w in zip(self.values, self.widths())]))

    def variation(self) -> float:
        vals = self.values
        return float(_sum_scalars([abs(vals[i + 1] - vals[i]) for i in range(len(vals) - 1)]))

    def bv_norm(self) -> float:
        return self.l1_norm() + self.variation()

    def sup_norm(self) -> float:
        return float(max(abs(v) for v in self.values))

    def essinf(self) -> float:
        if not self.is_real():
            raise ValueError("essinf of a complex step function")
        return float(min(self.values))

    # -- pointwise algebra ----------------------------------------------

    def _binary(self, other: "StepFunction", op: Callable[[Scalar, Scalar], Scalar]) -> "StepFunction":
        bps = merge_breakpoints(self.breakpoints, other.breakpoints)
        va = _values_on(self, bps)
        vb = _values_on(other, bps)
        return StepFunction(bps, [op(a, b) for a, b in zip(va, vb)])

    def __add__(self, other):
        if isinstance(other, StepFunction):
            return self._binary(other, lambda a, b: a + b)
        return StepFunction(self.breakpoints, [v + other for v in self.values])

    def __sub__(self, other):
        if isinstance(other, StepFunction):
            return self._binary(other, lambda a, b: a - b)
        return StepFunction(self.breakpoints, [v - other for v in self.values])

    def __mul__(self, other):
        if isinstance(other, StepFunction):
            return self._binary(other, lambda a, b: a * b)
        return StepFunction(self.breakpoints, [v * other for v in self.values])

    __rmul__ = __mul__

    def __neg__(self):
        return StepFunction(self.breakpoints, [-v for v in self.values])

    def __truediv__(self, other):
        if isinstance(other, StepFunction):
            floor = min(abs(v) for v in other.values)
            if floor < 1e-12:
                raise ZeroDivisionError(
                    f"division by a step function with essinf |.| = {float(floor)} < 1e-12"
                )
            return self._binary(other, lambda a, b: a / b)
        return StepFunction(self.breakpoints, [v / other for v in self.values])

    def abs(self) -> "StepFunction":
        return StepFunction(self.breakpoints, [abs(v) for v in self.values])

    def exp_scaled(self, t: float) -> "StepFunction":
        """The complex step function exp(i*t*f); requires a real-valued f."""
        if not self.is_real():
            raise ValueError("exp_scaled needs a real-valued step function")
        return StepFunction(self.breakpoints, [cmath.exp(1j * t * float(v)) for v in self.values])

    # -- housekeeping -----------------------------------------------------

    def coalesce(self, tol: float) -> "StepFunction":
        """Merge adjacent pieces whose values differ by < tol (relative)."""
        if tol <= 0 or not self.breakpoints:
            return self
        kb: list[Fraction] = []
        kv: list[Scalar] = [self.values[0]]
        for i, b in enumerate(self.breakpoints):
            v = self.values[i + 1]
            scale = max(1.0, abs(kv[-1]), abs(v))
            if abs(v - kv[-1]) < tol * scale:
                continue
            kb.append(b)
            kv.append(v)
        return StepFunction(kb, kv)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self.breakpoints == other.breakpoints and self.values == other.values

    def __hash__(self):
        return hash((self.breakpoints, self.values))

    def __repr__(self):
        if self.piece_count <= 4:
            body = ", ".join(f"{float(lo):.4g}:{v}" for lo, _, v in self.pieces())
        else:
            body = f"{self.piece_count} pieces"
        return f"StepFunction({body})"

    # -- interop -----------------------------------------------------------

    def float_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(breakpoints, values) as numpy arrays for vectorized evaluation."""
        if self._float_cache is None:
            bps = np.array([float(b) for b in self.breakpoints], dtype=np.float64)
            if self.is_real():
                vals = np.array([float(v) for v in self.values], dtype=np.float64)
            else:
                vals = np.array([complex(v) for v in self.values], dtype=np.complex128)
            self._float_cache = (bps, vals)
        return self._float_cache

    def sample_values(self, x: np.ndarray) -> np.ndarray:
        bps, vals = self.float_arrays()
        return vals[np.searchsorted(bps, x, side="right")]

    def to_rows(self) -> list[tuple[float, Scalar]]:
        """(piece start, value) rows for CSV export."""
        return [(float(lo), v) for lo, _, v in self.pieces()]

    def to_json(self) -> dict:
        return {
            "breakpoints": [str(b) for b in self.breakpoints],
            "values": [
                {"re": v.real, "im": v.imag} if isinstance(v, complex) else float(v)
                for v in self.values
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "StepFunction":
        vals = [
            complex(v["re"], v["im"]) if isinstance(v, dict) else v
            for v in data["values"]
        ]
        return cls([Fraction(b) for b in data["breakpoints"]], vals)


ONE_FN = StepFunction.constant(1)


def merge_breakpoints(a: Sequence[Fraction], b: Sequence[Fraction]) -> tuple[Fraction, ...]:
    if not a:
        return tuple(b)
    if not b:
        return tuple(a)
    out: list[Fraction] = []
    i = j = 0
    while i < len(a) or j < len(b):
        if j >= len(b) or (i < len(a) and a[i] <= b[j]):
            x = a[i]
            i += 1
            if j < len(b) and b[j] == x:
                j += 1
        else:
            x = b[j]
            j += 1
        out.append(x)
    return tuple(out)


def _values_on(f: StepFunction, bps: Sequence[Fraction]) -> list[Scalar]:
    """Values of f on the pieces induced by a refinement of its breakpoints."""
    out = []
    own = f.breakpoints
    vals = f.values
    i = 0
    for b in bps:
        out.append(vals[i])
        if i < len(own) and own[i] == b:
            i += 1
    out.append(vals[i])
    # refinement may skip some of f's breakpoints only if bps is not finer;
    # fall back to direct evaluation in that case
    if i != len(own):
        pts = (ZERO,) + tuple(bps) + (ONE,)
        return [f((pts[k] + pts[k + 1]) / 2) for k in range(len(bps) + 1)]
    return out


def bv_norms(f: StepFunction) -> BVNorms:
    """(l1, variation, bv, sup) of a step function, exact finite sums."""
    l1 = f.l1_norm()
    var = f.variation()
    return BVNorms(l1, var, l1 + var, f.sup_norm())


def pointwise(f: StepFunction, arg, op: str) -> StepFunction:
    """Pointwise operation dispatcher: op in {add, mul, scale, exp_it}."""
    if op == "add":
        return f + arg
    if op == "mul":
        return f * arg
    if op == "scale":
        return f * arg
    if op == "exp_it":
        return f.exp_scaled(arg)
    raise ValueError(f"unknown pointwise op {op!r}")


def l1_distance(f: StepFunction, g: StepFunction) -> float:
    return (f - g).l1_norm()
