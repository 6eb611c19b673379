"""Driving base systems: i.i.d. shifts, heavy-tailed shifts, suspensions.

Symbol windows are two-sided and regenerate bit-identically from
(spec, seed, window).  Draws come from counter-based Philox substreams
keyed by (seed, stream, block), so extending a window in either direction
never perturbs symbols already inside it, and parallel consumers can
resample any sub-window independently.

The suspension variant realizes a tower over the heavy-tailed shift: states
are (word, counter) with counter below the roof height given by the first
word symbol; advancing past the roof shifts the word and resets the counter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, WindowError

_BLOCK = 4096

# stream tags for substream derivation
_FWD, _BWD, _ORIGIN = 0, 1, 2


def mix_seed(seed: int, salt: int) -> int:
    """splitmix64-style mix; derives decorrelated 64-bit seeds."""
    z = (seed + 0x9E3779B97F4A7C15 * (salt + 1)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _uniform_block(seed: int, stream: int, block: int) -> np.ndarray:
    key = [np.uint64(seed), np.uint64((stream << 56) | (block & (2**56 - 1)))]
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(_BLOCK)


class _UniformStream:
    """Random-access uniforms u[i], i >= 0, stable under extension."""

    def __init__(self, seed: int, stream: int):
        self.seed = seed
        self.stream = stream
        self._blocks: dict[int, np.ndarray] = {}

    def take(self, start: int, count: int) -> np.ndarray:
        out = np.empty(count)
        filled = 0
        while filled < count:
            i = start + filled
            b, off = divmod(i, _BLOCK)
            if b not in self._blocks:
                self._blocks[b] = _uniform_block(self.seed, self.stream, b)
            chunk = min(count - filled, _BLOCK - off)
            out[filled : filled + chunk] = self._blocks[b][off : off + chunk]
            filled += chunk
        return out


@dataclass(frozen=True)
class BaseSpec:
    """Declaration of the driving system; see the factory constructors."""

    variant: str
    seed: int = 0
    weights: tuple[float, ...] = ()
    delta: float = 0.0
    symbol_cap: int = 10**6
    inner: Optional["BaseSpec"] = None

    @staticmethod
    def iid_finite(weights, seed: int = 0) -> "BaseSpec":
        w = tuple(float(x) for x in weights)
        if not w:
            raise ConfigError("base.weights", "empty alphabet")
        if any(x < 0 for x in w):
            raise ConfigError("base.weights", "negative weight")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ConfigError("base.weights", f"weights sum to {sum(w)!r}, not 1")
        return BaseSpec(variant="iid_finite", seed=seed, weights=w)

    @staticmethod
    def iid_heavy_tail(delta: float, symbol_cap: int = 10**6, seed: int = 0) -> "BaseSpec":
        if not (0.0 < delta <= 1.0):
            raise ConfigError("base.delta", f"delta = {delta} outside (0, 1]")
        if symbol_cap < 1:
            raise ConfigError("base.symbol_cap", "need a positive symbol cap")
        return BaseSpec(variant="iid_heavy_tail", seed=seed, delta=delta, symbol_cap=symbol_cap)

    @staticmethod
    def suspension(inner: "BaseSpec", seed: int | None = None) -> "BaseSpec":
        if inner.variant == "iid_finite" and inner.weights and inner.weights[0] > 0:
            raise ConfigError(
                "base.inner", "suspension roof heights come from symbol values; symbol 0 must have weight 0"
            )
        if inner.variant == "suspension":
            raise ConfigError("base.inner", "nested suspensions are not supported")
        return BaseSpec(variant="suspension", seed=inner.seed if seed is None else seed, inner=inner)

    def with_seed(self, seed: int) -> "BaseSpec":
        if self.variant == "suspension":
            return BaseSpec.suspension(self.inner.with_seed(seed), seed=seed)
        return BaseSpec(
            variant=self.variant,
            seed=seed,
            weights=self.weights,
            delta=self.delta,
            symbol_cap=self.symbol_cap,
        )

    # -- laws ------------------------------------------------------------

    def symbol_weights(self) -> np.ndarray:
        """Probability vector over the alphabet (index = symbol for iid_finite,
        index + 1 = symbol for the heavy-tailed law)."""
        if self.variant == "iid_finite":
            return np.array(self.weights)
        if self.variant == "iid_heavy_tail":
            return _heavy_tail_weights(self.delta, self.symbol_cap)
        raise ValueError("suspension has no flat symbol law; use the inner spec")

    def to_json(self) -> dict:
        if self.variant == "iid_finite":
            return {"variant": "iid_finite", "weights": list(self.weights)}
        if self.variant == "iid_heavy_tail":
            return {"variant": "iid_heavy_tail", "delta": self.delta, "symbol_cap": self.symbol_cap}
        return {"variant": "suspension", "inner": self.inner.to_json()}

    @staticmethod
    def from_json(data: dict, seed: int = 0, field_path: str = "base") -> "BaseSpec":
        variant = data.get("variant")
        if variant == "iid_finite":
            if "weights" not in data:
                raise ConfigError(f"{field_path}.weights", "missing")
            return BaseSpec.iid_finite(data["weights"], seed=seed)
        if variant == "iid_heavy_tail":
            return BaseSpec.iid_heavy_tail(
                float(data.get("delta", 0.5)), int(data.get("symbol_cap", 10**6)), seed=seed
            )
        if variant == "suspension":
            if "inner" not in data:
                raise ConfigError(f"{field_path}.inner", "missing")
            inner = BaseSpec.from_json(data["inner"], seed=seed, field_path=f"{field_path}.inner")
            return BaseSpec.suspension(inner, seed=seed)
        raise ConfigError(f"{field_path}.variant", f"unknown variant {variant!r}")


_HEAVY_CACHE: dict[tuple[float, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _heavy_tail_tables(delta: float, cap: int):
    """(weights, cdf, length-biased cdf) for the truncated law w_i ~ i^-(2+delta)."""
    key = (delta, cap)
    if key not in _HEAVY_CACHE:
        i = np.arange(1, cap + 1, dtype=float)
        raw = i ** (-(2.0 + delta))
        w = raw / raw.sum()
        lb = raw * i
        _HEAVY_CACHE[key] = (w, np.cumsum(w), np.cumsum(lb / lb.sum()))
    return _HEAVY_CACHE[key]


def _heavy_tail_weights(delta: float, cap: int) -> np.ndarray:
    return _heavy_tail_tables(delta, cap)[0]


def _draw_symbols(spec: BaseSpec, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling: uniforms to symbols under the spec's i.i.d. law."""
    if spec.variant == "iid_finite":
        cdf = np.cumsum(spec.weights)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)
    if spec.variant == "iid_heavy_tail":
        _, cdf, _ = _heavy_tail_tables(spec.delta, spec.symbol_cap)
        return (np.searchsorted(cdf, u, side="right") + 1).astype(np.int64)
    raise ValueError("direct symbol draws need an i.i.d. spec")


class BasePath:
    """Immutable two-sided symbol window with shift access.

    Index 0 is the origin; valid indices run over [-n_back, n_fwd] relative
    to the origin of the *unshifted* path.  ``shift`` returns a lightweight
    view onto the same arrays with a moved origin.
    """

    def __init__(self, spec: BaseSpec, n_back: int, n_fwd: int, symbols: np.ndarray,
                 counters: np.ndarray | None = None, offset: int = 0):
        self.spec = spec
        self.n_back = n_back
        self.n_fwd = n_fwd
        self._symbols = symbols
        self._counters = counters
        self.offset = offset

    # -- window bookkeeping ---------------------------------------------

    @property
    def window(self) -> tuple[int, int]:
        """Valid index range [lo, hi] relative to the current origin."""
        return (-self.n_back - self.offset, self.n_fwd - self.offset)

    def _slot(self, k: int) -> int:
        lo, hi = self.window
        if not (lo <= k <= hi):
            raise WindowError(k, lo, hi)
        return k + self.offset + self.n_back

    def symbol(self, k: int = 0) -> int:
        return int(self._symbols[self._slot(k)])

    def fiber_counter(self, k: int = 0) -> int:
        if self._counters is None:
            raise ValueError(f"{self.spec.variant} path has no fiber counter")
        return int(self._counters[self._slot(k)])

    def shift(self, k: int) -> "BasePath":
        lo, hi = self.window
        if not (lo <= k <= hi):
            raise WindowError(k, lo, hi)
        return BasePath(self.spec, self.n_back, self.n_fwd, self._symbols,
                        self._counters, self.offset + k)

    def symbol_slice(self, lo: int, hi: int) -> np.ndarray:
        """Symbols at indices lo..hi inclusive (bounds-checked)."""
        return self._symbols[self._slot(lo) : self._slot(hi) + 1]

    def counter_slice(self, lo: int, hi: int) -> np.ndarray:
        self.fiber_counter(lo)
        return self._counters[self._slot(lo) : self._slot(hi) + 1]

    # -- suspension-specific ----------------------------------------------

    @property
    def is_suspension(self) -> bool:
        return self.spec.variant == "suspension"

    def roof(self, k: int = 0) -> int:
        """Roof height at index k: the first symbol of the current word."""
        if not self.is_suspension:
            raise ValueError("roof is defined for suspension paths only")
        return self.symbol(k)

    def at_roof_top(self, k: int = 0) -> bool:
        return self.fiber_counter(k) == self.roof(k) - 1

    # -- export -------------------------------------------------------------

    def rows(self) -> Iterator[tuple[int, int, int | None]]:
        lo, hi = self.window
        for k in range(lo, hi + 1):
            yield (k, self.symbol(k), self.fiber_counter(k) if self._counters is not None else None)

    def __repr__(self):
        lo, hi = self.window
        return f"BasePath({self.spec.variant}, window=[{lo}, {hi}])"


def sample_path(spec: BaseSpec, n_back: int, n_fwd: int) -> BasePath:
    """Draw a two-sided symbol window; deterministic in (spec, window)."""
    if n_back < 0 or n_fwd < 0:
        raise ValueError("window sizes must be nonnegative")
    if spec.variant in ("iid_finite", "iid_heavy_tail"):
        fwd = _UniformStream(spec.seed, _FWD)
        bwd = _UniformStream(spec.seed, _BWD)
        u = np.concatenate([bwd.take(0, n_back)[::-1], fwd.take(0, n_fwd + 1)])
        return BasePath(spec, n_back, n_fwd, _draw_symbols(spec, u))
    if spec.variant == "suspension":
        return _sample_suspension(spec, n_back, n_fwd)
    raise ConfigError("base.variant", f"unknown variant {spec.variant!r}")


def _sample_suspension(spec: BaseSpec, n_back: int, n_fwd: int) -> BasePath:
    inner = spec.inner
    # inner word positions touched by <= n_back backward and n_fwd forward steps
    p_lo, p_hi = -n_back - 1, n_fwd + 1
    fwd = _UniformStream(spec.seed, _FWD)
    bwd = _UniformStream(spec.seed, _BWD)
    word = np.empty(p_hi - p_lo + 1, dtype=np.int64)

    def idx(p: int) -> int:
        return p - p_lo

    word[idx(0) + 1 :] = _draw_symbols(inner, fwd.take(0, p_hi))
    word[: idx(0)] = _draw_symbols(inner, bwd.take(0, -p_lo))[::-1]

    # origin state from the normalized suspension measure: length-biased first
    # symbol, then a uniform counter below the roof
    u0, u1 = _UniformStream(spec.seed, _ORIGIN).take(0, 2)
    if inner.variant == "iid_heavy_tail":
        _, _, lb_cdf = _heavy_tail_tables(inner.delta, inner.symbol_cap)
        h0 = int(np.searchsorted(lb_cdf, u0, side="right")) + 1
    else:
        w = np.array(inner.weights)
        lb = w * np.arange(len(w))
        lb_cdf = np.cumsum(lb / lb.sum())
        h0 = int(np.searchsorted(lb_cdf, u0, side="right"))
    word[idx(0)] = h0
    i0 = int(u1 * h0)

    positions = np.empty(n_back + n_fwd + 1, dtype=np.int64)
    counters = np.empty(n_back + n_fwd + 1, dtype=np.int64)
    positions[n_back] = 0
    counters[n_back] = i0
    p, i = 0, i0
    for k in range(n_back + 1, n_back + n_fwd + 1):
        if i + 1 < word[idx(p)]:
            i += 1
        else:
            p += 1
            i = 0
        positions[k] = p
        counters[k] = i
    p, i = 0, i0
    for k in range(n_back - 1, -1, -1):
        if i > 0:
            i -= 1
        else:
            p -= 1
            i = word[idx(p)] - 1
        positions[k] = p
        counters[k] = i

    symbols = word[positions - p_lo]
    return BasePath(spec, n_back, n_fwd, symbols, counters)


def shift(path: BasePath, k: int) -> BasePath:
    return path.shift(k)


def roof(path: BasePath, k: int = 0) -> int:
    return path.roof(k)
