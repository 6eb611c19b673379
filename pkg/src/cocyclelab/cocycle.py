"""Cocycles: a driving base plus a symbol-to-map assignment.

For i.i.d. bases the assignment is keyed by the raw symbol.  For
suspension bases it is keyed by the roof position: key 0 applies at the
top of the roof (counter = height - 1), key 1 strictly below it.  This
is the convention used by the tower counterexample driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .base import BasePath, BaseSpec, mix_seed, sample_path
from .errors import ConfigError
from .maps import PiecewiseLinearMap
from .stepfn import StepFunction
from .transfer import transfer_apply

ROOF_TOP = 0
BELOW_ROOF = 1


@dataclass(frozen=True)
class CocycleSpec:
    base: BaseSpec
    assignment: Mapping[int, PiecewiseLinearMap]

    def validate(self) -> None:
        if self.base.variant == "iid_finite":
            for s, w in enumerate(self.base.weights):
                if w > 0 and s not in self.assignment:
                    raise ConfigError("maps", f"symbol {s} is reachable but has no map")
        elif self.base.variant == "suspension":
            for key in (ROOF_TOP, BELOW_ROOF):
                if key not in self.assignment:
                    raise ConfigError("maps", f"suspension key {key} has no map")

    def map_key(self, path: BasePath, k: int = 0) -> int:
        if path.is_suspension:
            return ROOF_TOP if path.at_roof_top(k) else BELOW_ROOF
        return path.symbol(k)

    def map_at(self, path: BasePath, k: int = 0) -> PiecewiseLinearMap:
        key = self.map_key(path, k)
        try:
            return self.assignment[key]
        except KeyError:
            raise ConfigError("maps", f"no map assigned to symbol {key}") from None

    def distinct_maps(self) -> list[PiecewiseLinearMap]:
        seen: list[PiecewiseLinearMap] = []
        for m in self.assignment.values():
            if m not in seen:
                seen.append(m)
        return seen

    def sample_path(self, n_back: int, n_fwd: int, seed: int | None = None) -> BasePath:
        spec = self.base if seed is None else self.base.with_seed(seed)
        return sample_path(spec, n_back, n_fwd)

    def maps_along(self, path: BasePath, start: int, n: int) -> list[PiecewiseLinearMap]:
        return [self.map_at(path, start + j) for j in range(n)]


@dataclass(frozen=True)
class ExpansionEstimate:
    mean: float
    half_width: float
    n_samples: int

    @property
    def expanding_on_average(self) -> bool:
        return self.mean - self.half_width > 0.0


def expansion_on_average(spec: CocycleSpec, n_samples: int, seed_salt: int = 101) -> ExpansionEstimate:
    """Monte Carlo estimate of the mean of log lambda(T) over the base.

    Returns the sample mean with a 3-sigma half width; callers should treat
    a non-positive lower bound as "not certified expanding on average".
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    path = spec.sample_path(0, n_samples - 1, seed=mix_seed(spec.base.seed, seed_salt))
    logs = np.array(
        [math.log(spec.map_at(path, k).min_expansion) for k in range(n_samples)]
    )
    mean = float(logs.mean())
    sd = float(logs.std(ddof=1)) if n_samples > 1 else 0.0
    return ExpansionEstimate(mean, 3.0 * sd / math.sqrt(n_samples), n_samples)


@dataclass(frozen=True)
class CoveringResult:
    covered: bool
    n: int | None
    essinf: float
    n_max: int

    @property
    def status(self) -> str:
        return "covered" if self.covered else "exceeded"


def covering_time(
    spec: CocycleSpec,
    path: BasePath,
    interval: tuple,
    n_max: int,
    start: int = 0,
) -> CoveringResult:
    """Smallest n with essinf L^n(1_I) > 0 along the path, exactly.

    The essential infimum of a step function is its minimum value, so the
    covering time is computed without sampling.  Returns ``exceeded`` when
    n_max compositions never push mass everywhere.
    """
    lo, hi = interval
    g = StepFunction.indicator(lo, hi)
    if g.l1_norm() == 0:
        raise ValueError("interval has zero length")
    last_inf = g.essinf()
    for n in range(1, n_max + 1):
        g = transfer_apply(spec.map_at(path, start + n - 1), g)
        last_inf = g.essinf()
        if last_inf > 0:
            return CoveringResult(True, n, last_inf, n_max)
    return CoveringResult(False, None, last_inf, n_max)
