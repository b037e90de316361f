"""Readers for the solver's file outputs.

These parsers are deliberately independent of the solver package: the plot
scripts consume only documented file formats (iteration records, sweep
summaries, field dumps) and fail loudly, naming the offending column, when a
file does not match its schema.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

RECORD_COLUMNS = ("k", "lambda", "gamma_bar", "delta_bar", "J_tilde",
                  "mass_error", "min_m", "wall_ms")
SUMMARY_COLUMNS = ("h", "dt", "k_star", "final_gamma_bar")
FIELD_HEADER = ("d", "N", "T", "dt", "h", "kind")


class SchemaError(ValueError):
    """An input file does not match its documented schema."""


def _check_header(found: list[str], expected: tuple[str, ...], path) -> None:
    for i, name in enumerate(expected):
        if i >= len(found) or found[i] != name:
            offending = found[i] if i < len(found) else "<missing>"
            raise SchemaError(
                f"{path}: expected column {i + 1} to be {name!r}, "
                f"found {offending!r}")
    if len(found) > len(expected):
        raise SchemaError(
            f"{path}: unexpected extra column {found[len(expected)]!r}")


def read_records(path) -> dict[str, np.ndarray]:
    """Iteration records as a column dict keyed by the documented names."""
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty records file")
    _check_header(lines[0].split(","), RECORD_COLUMNS, path)
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if rows.size == 0:
        raise SchemaError(f"{path}: no data rows")
    return {name: rows[:, i] for i, name in enumerate(RECORD_COLUMNS)}


def read_summary(path) -> dict[str, np.ndarray]:
    """Sweep summary table as a column dict."""
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty summary file")
    _check_header(lines[0].split(","), SUMMARY_COLUMNS, path)
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return {name: rows[:, i] for i, name in enumerate(SUMMARY_COLUMNS)}


@dataclass
class FieldDump:
    d: int
    N: int
    T: int
    dt: float
    h: float
    kind: str
    values: np.ndarray  # one row per time slice

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.dt


def read_field(path) -> FieldDump:
    """Field dump: two header lines, then one row per time slice."""
    path = Path(path)
    with path.open() as fh:
        names = fh.readline().strip().split(",")
        _check_header(names, FIELD_HEADER, path)
        values = fh.readline().strip().split(",")
        meta = dict(zip(names, values))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return FieldDump(d=int(meta["d"]), N=int(meta["N"]), T=int(meta["T"]),
                     dt=float(meta["dt"]), h=float(meta["h"]),
                     kind=meta["kind"], values=data)


def sweep_run_dirs(sweep_dir) -> list[Path]:
    """Per-mesh run directories of a sweep output, sorted by mesh size."""
    sweep_dir = Path(sweep_dir)
    subs = sorted(p for p in sweep_dir.iterdir()
                  if p.is_dir() and (p / "records.csv").exists())
    if not subs:
        raise SchemaError(f"{sweep_dir}: no per-mesh run directories found")
    return subs
