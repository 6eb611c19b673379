"""Tower-driven cocycle with divergent asymptotic variance.

The base is a suspension over the heavy-tailed shift; the fiber map is the
half-preserving slope-2 map strictly below the roof and the doubling map
exactly at the top (a config toggle swaps the below-roof map for the
identity, which leaves every exact formula unchanged).  The observable is
psi = 2*1_[0,1/2) - 1.

For this cocycle the autocovariance at lag n from a state with cover time
c = height - counter is exactly 1 when n < c and 0 afterwards, so the
n-step variance has the closed form

    (1/N) E(S_N psi)^2 = (2/N) sum_{n<N} min(cover(n-th shift), N - n) - 1,

whose moving averages diverge at rate ~ N^{1-delta}: the Green-Kubo series
has no certifiable tail, and this module measures the divergence and the
polynomial tail of the cover time instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import BasePath, BaseSpec, mix_seed, sample_path, _heavy_tail_tables
from .cocycle import BELOW_ROOF, ROOF_TOP, CocycleSpec
from .maps import buzzi_t1, doubling, identity_map
from .stepfn import StepFunction
from .transfer import cocycle_apply

PSI = StepFunction(["1/2"], [1, -1])


@dataclass(frozen=True)
class SuspensionExperiment:
    delta: float = 0.5
    seed: int = 0
    symbol_cap: int = 10**6
    simplified: bool = False  # identity below the roof instead of the half-preserving map
    n_grid: tuple[int, ...] = (100, 1000, 10000)

    def base_spec(self) -> BaseSpec:
        inner = BaseSpec.iid_heavy_tail(self.delta, self.symbol_cap, seed=self.seed)
        return BaseSpec.suspension(inner)

    def cocycle(self) -> CocycleSpec:
        below = identity_map() if self.simplified else buzzi_t1()
        return CocycleSpec(self.base_spec(), {ROOF_TOP: doubling(), BELOW_ROOF: below})

    def sample(self, n_fwd: int, salt: int = 0, n_back: int = 0) -> BasePath:
        spec = self.base_spec().with_seed(mix_seed(self.seed, salt))
        return sample_path(spec, n_back, n_fwd)


def cover_time(path: BasePath, k: int = 0) -> int:
    """Steps until the left half covers the interval: roof height minus counter."""
    return path.roof(k) - path.fiber_counter(k)


def cover_times(path: BasePath, lo: int, hi: int) -> np.ndarray:
    return path.symbol_slice(lo, hi) - path.counter_slice(lo, hi)


def exact_correlation(path: BasePath, k: int, n: int) -> int:
    """Closed-form lag-n autocovariance of psi from the state at index k.

    Returns 1 while n is below the cover time and 0 afterwards; n = 0 gives
    the integral of psi^2, which is 1 (psi is +-1 valued).
    """
    if n < 0:
        raise ValueError("lag must be nonnegative")
    return 1 if n < cover_time(path, k) else 0


def operator_correlation(spec: CocycleSpec, path: BasePath, k: int, n: int) -> float:
    """The same autocovariance through the exact transfer calculus."""
    maps = spec.maps_along(path, k, n)
    transported = cocycle_apply(maps, PSI)
    return float((transported * PSI).integral())


@dataclass
class BlowupReport:
    n_grid: list[int]
    mean_variance: list[float]  # averaged (1/N) E(S_N)^2 per N
    mean_moving_average: list[float]  # averaged (1/N) sum min(cover, N - n)
    loglog_slope: float
    growth_factor: float  # last grid value over first
    monotone_fraction: float  # samples with value(N_max) > value(N_min)
    samples: int
    psi_square_integral: float
    psi_square_flag: str


def variance_blowup(
    exp: SuspensionExperiment,
    n_grid: Sequence[int] | None = None,
    base_samples: int = 100,
) -> BlowupReport:
    """Average the exact N-step variance over independent tower states.

    Per sample the cover times along the path give the variance by the
    closed form above; the log-log slope across the grid estimates the
    divergence exponent (theory: 1 - delta).
    """
    grid = sorted(set(int(n) for n in (n_grid or exp.n_grid)))
    n_max = grid[-1]
    per_sample = np.zeros((base_samples, len(grid)))
    moving = np.zeros((base_samples, len(grid)))
    for s in range(base_samples):
        path = exp.sample(n_fwd=n_max, salt=s + 1)
        nc = cover_times(path, 0, n_max - 1).astype(np.int64)
        for g, n in enumerate(grid):
            offsets = n - np.arange(n)
            mavg = float(np.minimum(nc[:n], offsets).mean())
            moving[s, g] = mavg
            per_sample[s, g] = 2.0 * mavg - 1.0
    mean_var = per_sample.mean(axis=0)
    xs = np.log(grid)
    slope = float(np.polyfit(xs, np.log(mean_var), 1)[0])
    return BlowupReport(
        grid,
        [float(v) for v in mean_var],
        [float(v) for v in moving.mean(axis=0)],
        slope,
        float(mean_var[-1] / mean_var[0]),
        float(np.mean(per_sample[:, -1] > per_sample[:, 0])),
        base_samples,
        1.0,
        "psi is +-1 valued so its square integrates to 1 exactly",
    )


def truncated_cover_mean(exp: SuspensionExperiment, cap: int) -> float:
    """Exact expectation of min(cover, cap) under the stationary tower measure.

    Uses E min(cover, M) = sum_{j=1..M} P(cover >= j) with
    P(cover = N) = tail weight of N over the mean roof height.
    """
    w, _, _ = _heavy_tail_tables(exp.delta, exp.symbol_cap)
    mean_height = float(np.sum(w * np.arange(1, exp.symbol_cap + 1)))
    tail = np.concatenate([[1.0], 1.0 - np.cumsum(w)])[:-1]  # tail[N-1] = P(height >= N)
    p_cover = tail / mean_height  # p_cover[N-1] = P(cover = N)
    suffix = np.cumsum(p_cover[::-1])[::-1]  # suffix[j-1] = P(cover >= j)
    return float(np.sum(suffix[:cap]))


@dataclass
class MakerReport:
    n_grid: list[int]
    truncation_levels: list[int]
    truncated_averages: dict[int, list[float]]  # level -> per-N averaged moving sums
    truncated_expectations: dict[int, float]  # level -> exact E min(cover, level)
    within_3sigma: dict[int, bool]
    untruncated: list[float]


def maker_check(
    exp: SuspensionExperiment,
    n_grid: Sequence[int] | None = None,
    levels: Sequence[int] = (1, 10),
    base_samples: int = 100,
) -> MakerReport:
    """Moving ergodic averages of min(cover, level) against exact expectations.

    Truncated levels must converge to the exact mean (the integrable case);
    the untruncated statistic coincides with the variance moving average
    and must climb through the grid.
    """
    grid = sorted(set(int(n) for n in (n_grid or exp.n_grid)))
    n_max = grid[-1]
    levels = sorted(set(int(m) for m in levels))
    per_level = {m: np.zeros((base_samples, len(grid))) for m in levels}
    untrunc = np.zeros((base_samples, len(grid)))
    for s in range(base_samples):
        path = exp.sample(n_fwd=n_max, salt=s + 1)
        nc = cover_times(path, 0, n_max - 1).astype(np.int64)
        for g, n in enumerate(grid):
            offsets = n - np.arange(n)
            untrunc[s, g] = float(np.minimum(nc[:n], offsets).mean())
            for m in levels:
                # plain Birkhoff average of the level-m truncation
                per_level[m][s, g] = float(np.minimum(nc[:n], m).mean())
    averages = {m: [float(v) for v in per_level[m].mean(axis=0)] for m in levels}
    expectations = {m: truncated_cover_mean(exp, m) for m in levels}
    within = {}
    for m in levels:
        final = per_level[m][:, -1]
        se = float(final.std(ddof=1)) / math.sqrt(base_samples)
        tol = 3.0 * se + 1e-6 * max(1.0, expectations[m])
        within[m] = bool(abs(float(final.mean()) - expectations[m]) <= tol)
    return MakerReport(grid, levels, averages, expectations, within, [float(v) for v in untrunc.mean(axis=0)])


@dataclass
class TailReport:
    fitted_exponent: float
    expected_exponent: float
    fit_range: tuple[int, int]
    samples: int
    cutoff_flagged: bool
    counts: dict[int, int]


def tail_check(
    exp: SuspensionExperiment,
    samples: int = 10**5,
    n_min: int = 5,
    min_count: int = 25,
) -> TailReport:
    """Log-log fit of the cover-time distribution; expected exponent -(1+delta).

    Samples states directly from the stationary tower measure (length-biased
    roof, uniform counter), so cover = height - counter needs no path walk.
    """
    w, _, lb_cdf = _heavy_tail_tables(exp.delta, exp.symbol_cap)
    gen = np.random.Generator(np.random.Philox(key=[np.uint64(exp.seed), np.uint64(0x7A11)]))
    u = gen.random(samples)
    heights = np.searchsorted(lb_cdf, u, side="right") + 1
    counters = np.floor(gen.random(samples) * heights).astype(np.int64)
    nc = heights - counters
    if len(nc) < 100:
        raise ValueError("insufficient tail mass")
    values, counts = np.unique(nc, return_counts=True)
    keep = (values >= n_min) & (counts >= min_count)
    if keep.sum() < 3:
        raise ValueError("insufficient tail mass for a log-log fit")
    xs = np.log(values[keep].astype(float))
    ys = np.log(counts[keep].astype(float) / samples)
    slope = float(np.polyfit(xs, ys, 1)[0])
    # the truncation distorts the fit when the cap sits within an order of
    # magnitude of the fitted range
    cutoff = bool(exp.symbol_cap < 10 * int(values[keep].max()))
    return TailReport(
        slope,
        -(1.0 + exp.delta),
        (int(values[keep].min()), int(values[keep].max())),
        samples,
        cutoff,
        {int(v): int(c) for v, c in zip(values[keep], counts[keep])},
    )
