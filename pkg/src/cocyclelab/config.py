"""Experiment configuration: a single JSON document, diffable and hashable.

Every numeric knob of the pipeline lives here so a run is reproducible
from (config, seed) alone.  Validation happens before any computation and
reports the offending field by path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .base import BaseSpec
from .cocycle import CocycleSpec
from .errors import ConfigError
from .maps import PiecewiseLinearMap, catalog, custom_map
from .limits import ObservableSpec
from .stepfn import StepFunction

SCHEMA_VERSION = 1

DEFAULT_CONFIG: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "seed": 20260808,
    "base": {"variant": "iid_finite", "weights": [0.5, 0.5]},
    "maps": {"0": "doubling", "1": "buzzi_t1"},
    "observable": {
        "components": [{"breakpoints": ["1/2"], "values": [1, -1]}],
        "centered": False,
    },
    "tolerances": {"pullback": 1e-10, "series": 1e-9, "coalesce": 0.0},
    "grids": {
        "n_max": 200,
        "decay_n_max": 12,
        "adapted_n_max": 40,
        "window_back": 80,
        "window_fwd": 320,
        "fibers": 100,
        "trials": 10000,
        "n_steps": 10000,
        "N_grid": [100, 1000, 10000],
        "t_grid": [0.0, 0.05, 0.1],
        "variance_fibers": 4000,
        "twisted_trials": 100000,
        "twisted_n_cf": 100,
        "twisted_n_norm": 200,
    },
    "counterexample": {
        "delta": 0.5,
        "symbol_cap": 1000000,
        "simplified": False,
        "base_samples": 100,
        "tail_samples": 100000,
    },
    "khitting": {"paths": 10000, "n_max": 200, "k_max": 50, "a": None},
    "output_dir": "out",
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def _step_from_json(data: Any, field_path: str) -> StepFunction:
    if not isinstance(data, dict) or "values" not in data:
        raise ConfigError(field_path, "expected {breakpoints, values}")
    try:
        return StepFunction(data.get("breakpoints", []), data["values"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(field_path, str(exc)) from None


def _map_from_json(data: Any, field_path: str) -> PiecewiseLinearMap:
    if isinstance(data, str):
        known = catalog()
        if data not in known:
            raise ConfigError(field_path, f"unknown catalog map {data!r}")
        return known[data]
    if isinstance(data, dict) and "branches" in data:
        try:
            return custom_map(data.get("name", "custom"), data["branches"])
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(field_path, str(exc)) from None
    raise ConfigError(field_path, "expected a catalog name or {name, branches}")


@dataclass
class ExperimentConfig:
    raw: dict[str, Any]

    @staticmethod
    def load(path: str | Path | None = None, overrides: dict | None = None) -> "ExperimentConfig":
        data: dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except FileNotFoundError:
                raise ConfigError("config", f"file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"invalid JSON: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError("config", "top level must be an object")
        merged = _merge(DEFAULT_CONFIG, data)
        if overrides:
            merged = _merge(merged, overrides)
        cfg = ExperimentConfig(merged)
        cfg.validate()
        return cfg

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        raw = self.raw
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}")
        seed = raw.get("seed")
        if not isinstance(seed, int) or not (0 <= seed < 2**64):
            raise ConfigError("seed", "need an unsigned 64-bit integer")
        for name, value in raw.get("tolerances", {}).items():
            if name not in ("pullback", "series", "coalesce"):
                raise ConfigError(f"tolerances.{name}", "unknown tolerance")
            if not isinstance(value, (int, float)) or value < 0:
                raise ConfigError(f"tolerances.{name}", f"must be >= 0, got {value!r}")
            if name in ("pullback", "series") and value == 0:
                raise ConfigError(f"tolerances.{name}", "must be > 0")
        grids = raw.get("grids", {})
        for name in ("n_max", "decay_n_max", "adapted_n_max", "window_back", "window_fwd",
                     "fibers", "trials", "n_steps", "variance_fibers", "twisted_trials",
                     "twisted_n_cf", "twisted_n_norm"):
            v = grids.get(name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"grids.{name}", f"need a positive integer, got {v!r}")
        if not grids.get("N_grid") or any(not isinstance(n, int) or n <= 0 for n in grids["N_grid"]):
            raise ConfigError("grids.N_grid", "need positive integers")
        ce = raw.get("counterexample", {})
        if not (0.0 < float(ce.get("delta", 0.5)) <= 1.0):
            raise ConfigError("counterexample.delta", "delta must lie in (0, 1]")
        if int(ce.get("symbol_cap", 1)) < 1:
            raise ConfigError("counterexample.symbol_cap", "need a positive cap")
        # construct everything once so field errors surface during validate
        self.base_spec()
        self.cocycle()
        self.observable()

    # -- construction -------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def base_spec(self) -> BaseSpec:
        return BaseSpec.from_json(self.raw["base"], seed=self.seed)

    def cocycle(self) -> CocycleSpec:
        maps_cfg = self.raw.get("maps", {})
        if not isinstance(maps_cfg, dict) or not maps_cfg:
            raise ConfigError("maps", "need a symbol-to-map table")
        assignment = {}
        for key, value in maps_cfg.items():
            try:
                symbol = int(key)
            except ValueError:
                raise ConfigError(f"maps.{key}", "keys are integer symbols") from None
            assignment[symbol] = _map_from_json(value, f"maps.{key}")
        spec = CocycleSpec(self.base_spec(), assignment)
        spec.validate()
        return spec

    def observable(self) -> ObservableSpec:
        obs_cfg = self.raw.get("observable", {})
        comps_cfg = obs_cfg.get("components")
        if not comps_cfg:
            raise ConfigError("observable.components", "need at least one component")
        comps = []
        for i, comp in enumerate(comps_cfg):
            if isinstance(comp, dict) and "per_symbol" in comp:
                table = {
                    int(k): _step_from_json(v, f"observable.components[{i}].per_symbol.{k}")
                    for k, v in comp["per_symbol"].items()
                }
                comps.append(table)
            else:
                comps.append(_step_from_json(comp, f"observable.components[{i}]"))
        try:
            return ObservableSpec(tuple(comps), bool(obs_cfg.get("centered", False)))
        except ValueError as exc:
            raise ConfigError("observable.components", str(exc)) from None

    def tolerance(self, name: str) -> float:
        return float(self.raw["tolerances"][name])

    def grid(self, name: str):
        return self.raw["grids"][name]

    def counterexample_section(self) -> dict:
        return self.raw["counterexample"]

    def khitting_section(self) -> dict:
        return self.raw["khitting"]

    # -- provenance ----------------------------------------------------------

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        merged = _merge(self.raw, {"seed": seed})
        cfg = ExperimentConfig(merged)
        cfg.validate()
        return cfg
