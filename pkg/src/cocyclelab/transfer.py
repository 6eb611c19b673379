"""Transfer-operator action on step functions, Koopman pullback, Ulam fallback.

The transfer operator of a nonsingular map T acts by

    (L f)(x) = sum over T(y) = x of f(y) / |T'(y)|,

the dual of composition: integral of (L f) g dm = integral of f (g o T) dm.
For piecewise-linear maps the image of a step function is again a step
function and the action is evaluated exactly on the rational breakpoint
lattice.  The Ulam matrix is kept as a cross-check and as the projection
route for maps outside the piecewise-linear class.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import PieceBudgetError
from .maps import PiecewiseLinearMap
from .stepfn import ONE, ZERO, StepFunction, _sum_scalars

DEFAULT_PIECE_BUDGET = 10**6


def transfer_apply(pmap: PiecewiseLinearMap, f: StepFunction) -> StepFunction:
    """Exact image of f under the transfer operator of a piecewise-linear map."""
    cuts = set()
    for br in pmap.branches:
        lo_img, hi_img = br.image_bounds()
        for p in (lo_img, hi_img):
            if ZERO < p < ONE:
                cuts.add(p)
        for b in f.breakpoints:
            if br.lo < b < br.hi:
                img = br(b)
                if ZERO < img < ONE:
                    cuts.add(img)
    bps = tuple(sorted(cuts))
    pts = (ZERO,) + bps + (ONE,)
    values = []
    fvals = f.values
    fbps = f.breakpoints
    from bisect import bisect_right

    for i in range(len(bps) + 1):
        mid = (pts[i] + pts[i + 1]) / 2
        contributions = []
        for br in pmap.branches:
            x = br.preimage(mid)
            if x is not None:
                contributions.append(fvals[bisect_right(fbps, x)] / abs(br.slope))
        values.append(_sum_scalars(contributions))
    return StepFunction(bps, values)


def koopman_compose(pmap: PiecewiseLinearMap, f: StepFunction) -> StepFunction:
    """Exact pullback f o T through the branches of a piecewise-linear map."""
    cuts = set()
    for br in pmap.branches:
        if ZERO < br.lo < ONE:
            cuts.add(br.lo)
        for b in f.breakpoints:
            x = br.preimage(b)
            if x is not None and ZERO < x < ONE:
                cuts.add(x)
    bps = tuple(sorted(cuts))
    pts = (ZERO,) + bps + (ONE,)
    values = [f(pmap((pts[i] + pts[i + 1]) / 2)) for i in range(len(bps) + 1)]
    return StepFunction(bps, values)


def koopman_norm_bound(pmap: PiecewiseLinearMap) -> float:
    """Reported bound N with ||f o T||_BV <= N ||f||_BV: branch count + 1."""
    return pmap.branch_count + 1.0


def cocycle_apply(
    maps: Sequence[PiecewiseLinearMap],
    f: StepFunction,
    coalesce_tol: float = 0.0,
    piece_budget: int = DEFAULT_PIECE_BUDGET,
) -> StepFunction:
    """Left-to-right composition of transfer operators along a map sequence.

    ``maps[0]`` acts first.  Optional tolerance coalescing keeps piece growth
    near-linear along long cocycles at the cost of exactness; the default 0
    keeps the calculus exact.
    """
    g = f
    for pmap in maps:
        g = transfer_apply(pmap, g)
        if coalesce_tol > 0.0:
            g = g.coalesce(coalesce_tol)
        if g.piece_count > piece_budget:
            raise PieceBudgetError(
                f"step function grew to {g.piece_count} pieces (budget {piece_budget})"
            )
    return g


def is_lebesgue_preserving(pmap: PiecewiseLinearMap, tol: float = 0.0) -> bool:
    """True when L maps the constant 1 to itself (exactly, by default)."""
    image = transfer_apply(pmap, StepFunction.constant(1))
    if tol == 0.0:
        return image == StepFunction.constant(1)
    return (image - 1).l1_norm() <= tol and image.variation() <= tol


@dataclass(frozen=True)
class UlamMatrix:
    """Column-stochastic projection of a transfer operator onto k uniform bins.

    A[j, i] = m(B_i intersect T^{-1} B_j) / m(B_i).
    """

    bins: int
    matrix: np.ndarray

    def apply(self, density: np.ndarray) -> np.ndarray:
        density = np.asarray(density, dtype=float)
        if density.shape != (self.bins,):
            raise ValueError(f"expected density vector of length {self.bins}")
        return self.matrix @ density

    def column_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def ulam_matrix(pmap: PiecewiseLinearMap, k: int) -> UlamMatrix:
    if k < 2:
        raise ValueError("need at least 2 bins")
    entries = [[Fraction(0)] * k for _ in range(k)]
    width = Fraction(1, k)
    for br in pmap.branches:
        inv_slope = 1 / abs(br.slope)
        i_lo = int(br.lo / width)
        i_hi = min(k - 1, int(br.hi / width) if br.hi % width else int(br.hi / width) - 1)
        for i in range(i_lo, i_hi + 1):
            seg_lo = max(br.lo, i * width)
            seg_hi = min(br.hi, (i + 1) * width)
            if seg_hi <= seg_lo:
                continue
            y0, y1 = br(seg_lo), br(seg_hi)
            if y0 > y1:
                y0, y1 = y1, y0
            j_lo = int(y0 / width)
            j_hi = min(k - 1, int(y1 / width) if y1 % width else int(y1 / width) - 1)
            for j in range(j_lo, j_hi + 1):
                ov_lo = max(y0, j * width)
                ov_hi = min(y1, (j + 1) * width)
                if ov_hi > ov_lo:
                    # preimage mass inside B_i, normalized by m(B_i)
                    entries[j][i] += (ov_hi - ov_lo) * inv_slope / width
    matrix = np.array([[float(x) for x in row] for row in entries])
    return UlamMatrix(k, matrix)


def ulam_apply(mat: UlamMatrix, density: np.ndarray) -> np.ndarray:
    return mat.apply(density)


def step_to_bins(f: StepFunction, k: int) -> np.ndarray:
    """Bin averages of a step function over k uniform bins (exact for resolved f)."""
    width = Fraction(1, k)
    out = np.zeros(k)
    for lo, hi, v in f.pieces():
        i_lo = int(lo / width)
        i_hi = min(k - 1, int(hi / width) if hi % width else int(hi / width) - 1)
        for i in range(i_lo, i_hi + 1):
            seg = min(hi, (i + 1) * width) - max(lo, i * width)
            if seg > 0:
                out[i] += float(seg / width) * float(v)
    return out


def bins_to_step(density: np.ndarray) -> StepFunction:
    k = len(density)
    bps = [Fraction(i, k) for i in range(1, k)]
    return StepFunction(bps, [float(v) for v in density])
