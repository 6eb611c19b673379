"""Shared generators: random dyadic step functions keep all float arithmetic exact."""

from fractions import Fraction

import numpy as np
import pytest

from cocyclelab.stepfn import StepFunction


def random_dyadic_step(rng, max_pieces=10, bp_bits=20, val_bits=26, positive=False):
    """Random step function with dyadic breakpoints and values.

    Dyadic grids make transfer images, jumps and sums exact in binary
    floating point, so inequality checks are genuinely exact.
    """
    k = int(rng.integers(0, max_pieces))
    cuts = np.unique(rng.integers(1, 2**bp_bits, size=k))
    bps = [Fraction(int(c), 2**bp_bits) for c in cuts]
    lo = 1 if positive else -(2**val_bits)
    vals = [int(v) / 2**val_bits for v in rng.integers(lo, 2**val_bits, size=len(bps) + 1)]
    if positive:
        vals = [v + 0.125 for v in vals]
    return StepFunction(bps, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
