"""Artifact emission: CSV tables, JSON manifests, matplotlib SVG figures.

Files are written atomically (temp + rename).  Numbers are formatted with
shortest round-trip reprs and figures are rendered with a pinned hash salt
and no embedded dates, so a fixed (config, seed) reproduces byte-identical
outputs regardless of thread count or wall-clock.
"""

from __future__ import annotations

import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

matplotlib.rcParams["svg.hashsalt"] = "cocyclelab"

TOOL_VERSION = "0.1.0"
MANIFEST_SCHEMA_VERSION = 1


def format_number(x: Any) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, complex):
        return f"{x.real!r}{x.imag:+}j"
    return str(x)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(x) for x in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
    return path


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    _atomic_write(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())
    return path


def write_manifest(
    out_dir: str | Path,
    subcommand: str,
    config_hash: str,
    seed: int,
    constants: dict,
    warnings: list[str],
    outputs: list[str],
    timings: dict[str, float],
) -> Path:
    payload = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "subcommand": subcommand,
        "config_hash": config_hash,
        "seed": seed,
        "constants": constants,
        "warnings": warnings,
        "outputs": sorted(outputs),
        "timings_seconds": {k: round(v, 6) for k, v in timings.items()},
    }
    return write_json(Path(out_dir) / "manifest.json", payload)


def plot_series(
    path: str | Path,
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    logx: bool = False,
    logy: bool = False,
    annotate: str | None = None,
) -> Path:
    """Render line series to a self-contained SVG with deterministic bytes."""
    if not series or any(len(xs) == 0 for _, xs, _ in series):
        raise ValueError("empty series")
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, xs, ys in series:
        if len(xs) == 1:
            ax.plot(xs, ys, marker="o", label=label)
        else:
            ax.plot(xs, ys, marker=".", label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    if annotate:
        ax.annotate(annotate, xy=(0.03, 0.95), xycoords="axes fraction",
                    fontsize=8, va="top")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)
    return path
