"""Orbit simulation under the fiber measures and empirical limit diagnostics.

Binary floating point collapses orbits of dyadic slope-2 maps (every
dyadic point is eventually periodic at 0), so the orbit engine keeps the
state on the grid k 2^{-53} and replenishes one fresh random bit at the
bottom of the mantissa per slope-2 step.  Together with exact dyadic
branch arithmetic this simulates the true orbit of a point whose binary
expansion is the initial 53 bits followed by the replenished stream -
bit-exact, and distributionally faithful to the invariant measure.  Maps
outside the dyadic slope-2 / identity family fall back to plain float
orbits (recorded on the batch).

Trial i is reproducible from (seed, i): initial points and refresh bits
are rows of counter-based Philox tables, so chunked or parallel execution
cannot change any trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .base import BasePath
from .equivariant import EquivariantFamily
from .limits import CenteredObservable, ObservableSpec, center
from .maps import PiecewiseLinearMap
from .stepfn import StepFunction

_GRID = 2.0**-53

# Philox table tags
_TAG_INIT, _TAG_BITS, _TAG_MU = 0xA1, 0xB2, 0xC3


def _table_gen(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(tag)]))


def _orbit_kind(pmap: PiecewiseLinearMap) -> str | None:
    """'shift2' for dyadic slope-2 maps, 'identity' for the identity, else None."""
    if all(b.slope == 1 and b.intercept == 0 for b in pmap.branches):
        return "identity"

    def dyadic(x: Fraction) -> bool:
        return x.denominator & (x.denominator - 1) == 0 and x.denominator <= 2**52

    if all(
        b.slope == 2 and dyadic(b.intercept) and dyadic(b.lo) for b in pmap.branches
    ):
        return "shift2"
    return None


@dataclass
class TrialBatch:
    """Per-trial n-step sums of a vector observable along one fixed path."""

    path: BasePath
    n: int
    trials: int
    seed: int
    sums: np.ndarray  # (trials, d)
    initial_points: np.ndarray
    engine: str  # "bits" or "float"
    partials: dict[int, np.ndarray] | None = None  # n -> (trials, d)


def sample_mu(density: StepFunction, count: int, seed: int, tag: int = _TAG_MU) -> np.ndarray:
    """i.i.d. points with law density dm by inverse-CDF transform of grid uniforms."""
    if not density.is_real() or density.essinf() < 0:
        raise ValueError("need a nonnegative real density")
    gen = _table_gen(seed, tag)
    u = (gen.integers(0, 2**53, size=count) * _GRID).astype(np.float64)
    bps, vals = density.float_arrays()
    edges = np.concatenate([[0.0], bps, [1.0]])
    widths = np.diff(edges)
    masses = vals * widths
    cdf = np.concatenate([[0.0], np.cumsum(masses)])
    cdf[-1] = 1.0
    idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(widths) - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(masses[idx] > 0, (u - cdf[idx]) / masses[idx], 0.0)
    return edges[idx] + frac * widths[idx]


def _obs_tables(cen: CenteredObservable, at: int, n: int):
    """Per-step (breakpoints, values) float tables for each component."""
    d = cen.dimension
    tables = []
    for k in range(at, at + n):
        row = []
        for i in range(d):
            row.append(cen.component(i, k).float_arrays())
        tables.append(row)
    return tables


def simulate(
    family: EquivariantFamily,
    obs: ObservableSpec | CenteredObservable,
    n: int,
    trials: int,
    seed: int,
    at: int = 0,
    grid: Sequence[int] | None = None,
    points: np.ndarray | None = None,
) -> TrialBatch:
    """Birkhoff sums of the observable over `trials` orbits of length n.

    Initial points are drawn from the fiber measure at `at` unless supplied.
    ``grid`` asks for partial sums to be recorded at those step counts.
    """
    cen = obs if isinstance(obs, CenteredObservable) else center(obs, family)
    d = cen.dimension
    spec, path = family.spec, family.path
    step_maps = [spec.map_at(path, at + k) for k in range(n)]
    kinds = [_orbit_kind(m) for m in step_maps]
    exact = all(k is not None for k in kinds)

    if points is None:
        x = sample_mu(family.density(at), trials, seed, tag=_TAG_INIT)
    else:
        x = np.asarray(points, dtype=np.float64).copy()
        if x.shape != (trials,):
            raise ValueError("points must be a vector of length `trials`")
    x0 = x.copy()

    bit_words = None
    if exact:
        n_shift = sum(1 for k in kinds if k == "shift2")
        words_per_trial = max(1, (n_shift + 63) // 64)
        bit_words = _table_gen(seed, _TAG_BITS).integers(
            0, 2**64, size=(trials, words_per_trial), dtype=np.uint64
        )

    obs_tables = _obs_tables(cen, at, n)
    sums = np.zeros((trials, d))
    partials: dict[int, np.ndarray] = {}
    want = sorted(set(grid)) if grid else []
    bitpos = 0
    for k in range(n):
        for i in range(d):
            bps, vals = obs_tables[k][i]
            sums[:, i] += vals[np.searchsorted(bps, x, side="right")]
        pmap = step_maps[k]
        kind = kinds[k] if exact else None
        if kind == "identity":
            pass
        else:
            lefts, slopes, icpts = pmap.float_tables()
            idx = np.searchsorted(lefts, x, side="right") - 1
            x = slopes[idx] * x + icpts[idx]
            if kind == "shift2":
                w, b = divmod(bitpos, 64)
                bits = (bit_words[:, w] >> np.uint64(b)) & np.uint64(1)
                x += bits.astype(np.float64) * _GRID
                bitpos += 1
            else:
                np.clip(x, 0.0, np.nextafter(1.0, 0.0), out=x)
        if (k + 1) in want:
            partials[k + 1] = sums.copy()
    return TrialBatch(
        path, n, trials, seed, sums, x0, "bits" if exact else "float", partials or None
    )


def birkhoff(
    family: EquivariantFamily,
    obs: ObservableSpec | CenteredObservable,
    points: np.ndarray,
    n: int,
    seed: int = 0,
    at: int = 0,
    grid: Sequence[int] | None = None,
) -> TrialBatch:
    """n-step sums started from supplied points (see `simulate`)."""
    return simulate(
        family, obs, n=n, trials=len(points), seed=seed, at=at, grid=grid, points=points
    )


@dataclass
class VarianceGrowthRow:
    n: int
    value: float  # mean(S_n^2) / n
    half_width: float  # 3 sigma CI on the mean


def variance_growth(
    family: EquivariantFamily,
    obs: ObservableSpec | CenteredObservable,
    n_grid: Sequence[int],
    trials: int,
    seed: int,
    at: int = 0,
) -> list[VarianceGrowthRow]:
    """Empirical (1/n) E(S_n^2) along a grid, one simulation pass."""
    n_grid = sorted(set(int(n) for n in n_grid))
    batch = simulate(family, obs, n=max(n_grid), trials=trials, seed=seed, at=at, grid=n_grid)
    rows = []
    for n in n_grid:
        s = batch.partials[n][:, 0] if batch.partials and n in batch.partials else batch.sums[:, 0]
        sq = s * s / n
        half = 3.0 * float(sq.std(ddof=1)) / math.sqrt(trials)
        rows.append(VarianceGrowthRow(n, float(sq.mean()), half))
    return rows


@dataclass
class CltReport:
    ks_statistic: float
    ks_pvalue: float
    second_moment_ratio: float  # empirical var(S_n / sqrt(n sigma^2)), should be ~1
    fourth_moment_ratio: float  # kurtosis / 3
    degenerate: bool
    n: int
    trials: int


def clt_diagnostics(batch: TrialBatch, sigma2: float) -> CltReport:
    """Kolmogorov-Smirnov distance of normalized sums to the standard normal."""
    if sigma2 <= 0:
        raise ValueError("need sigma^2 > 0 for CLT normalization")
    z = batch.sums[:, 0] / math.sqrt(batch.n * sigma2)
    degenerate = bool(z.std() < 0.1)
    ks = stats.kstest(z, "norm")
    m2 = float(np.mean(z * z))
    m4 = float(np.mean(z**4) / 3.0)
    return CltReport(float(ks.statistic), float(ks.pvalue), m2, m4, degenerate, batch.n, batch.trials)


@dataclass
class LilReport:
    violation_fraction: float  # fraction of (trial, step) pairs outside the envelope
    final_quarter_violation: float
    max_normalized_excursion: float
    epsilon: float
    n: int
    trials: int


def lil_envelope(
    family: EquivariantFamily,
    obs: ObservableSpec | CenteredObservable,
    n: int,
    trials: int,
    sigma2: float,
    seed: int,
    epsilon: float = 0.5,
    at: int = 0,
) -> LilReport:
    """Iterated-logarithm envelope statistics |S_k| <= (1+eps) sqrt(2 sigma^2 k loglog k).

    Streams the trajectories, accumulating violation counts for k >= 3 and
    the maximum normalized excursion; a weak check (violations should thin
    out in n), not a sharp test.
    """
    cen = obs if isinstance(obs, CenteredObservable) else center(obs, family)
    if cen.dimension != 1:
        raise ValueError("LIL envelope is scalar (d = 1)")
    spec, path = family.spec, family.path
    step_maps = [spec.map_at(path, at + k) for k in range(n)]
    kinds = [_orbit_kind(m) for m in step_maps]
    exact = all(k is not None for k in kinds)
    x = sample_mu(family.density(at), trials, seed, tag=_TAG_INIT)
    bit_words = None
    if exact:
        n_shift = sum(1 for k in kinds if k == "shift2")
        bit_words = _table_gen(seed, _TAG_BITS).integers(
            0, 2**64, size=(trials, max(1, (n_shift + 63) // 64)), dtype=np.uint64
        )
    tables = _obs_tables(cen, at, n)
    s = np.zeros(trials)
    viol = 0
    viol_final = 0
    checked = 0
    checked_final = 0
    max_exc = 0.0
    bitpos = 0
    final_start = 3 * n // 4
    for k in range(n):
        bps, vals = tables[k][0]
        s += vals[np.searchsorted(bps, x, side="right")]
        step = k + 1
        if step >= 3:
            env = (1.0 + epsilon) * math.sqrt(2.0 * sigma2 * step * math.log(math.log(step)))
            out = np.abs(s) > env
            viol += int(out.sum())
            checked += trials
            if step > final_start:
                viol_final += int(out.sum())
                checked_final += trials
                # excursion statistic on settled trajectories only: the early
                # envelope is tiny for any bounded sum
                max_exc = max(max_exc, float(np.max(np.abs(s)) / env))
        pmap = step_maps[k]
        kind = kinds[k] if exact else None
        if kind != "identity":
            lefts, slopes, icpts = pmap.float_tables()
            idx = np.searchsorted(lefts, x, side="right") - 1
            x = slopes[idx] * x + icpts[idx]
            if kind == "shift2":
                w, b = divmod(bitpos, 64)
                x += ((bit_words[:, w] >> np.uint64(b)) & np.uint64(1)).astype(np.float64) * _GRID
                bitpos += 1
            elif kind is None:
                np.clip(x, 0.0, np.nextafter(1.0, 0.0), out=x)
    return LilReport(
        viol / checked if checked else 0.0,
        viol_final / checked_final if checked_final else 0.0,
        max_exc,
        epsilon,
        n,
        trials,
    )
