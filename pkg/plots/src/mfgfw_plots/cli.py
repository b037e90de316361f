"""Entry points: plot-heatmap, plot-convergence, plot-sweep.

Each script accepts either flags mirroring the figure spec or ``--spec FILE``
pointing at a flat ``key = value`` file (same conventions as the solver's
config files).  Schema problems in the inputs exit nonzero with a message
naming the offending column.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from .figures import FigureSpec, render
from .io import SchemaError

_SPEC_KEYS = {"kind", "input", "out", "scale", "labels", "tmin", "tmax",
              "vmin", "vmax", "cmap", "title"}


def load_spec_file(path: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SPEC_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _build_spec(kind: str, args: argparse.Namespace) -> FigureSpec:
    merged: dict = {}
    if args.spec:
        merged.update(load_spec_file(args.spec))
    for key in ("input", "out", "scale", "labels", "tmin", "tmax", "vmin",
                "vmax", "cmap", "title"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    inputs = merged.get("input")
    if inputs is None:
        raise ValueError("an input path is required (--input or spec file)")
    if isinstance(inputs, str):
        inputs = [p for p in inputs.split(";") if p]
    out = merged.get("out")
    if out is None:
        raise ValueError("an output image path is required (--out or spec file)")
    labels = merged.get("labels", ())
    if isinstance(labels, str):
        labels = tuple(p for p in labels.split(";") if p)
    window = None
    if merged.get("tmin") is not None or merged.get("tmax") is not None:
        window = (float(merged.get("tmin", 0.0)), float(merged.get("tmax", 1.0)))
    return FigureSpec(
        kind=kind, inputs=inputs, out=str(out),
        scale=merged.get("scale", "semilog-y" if kind != "heatmap" else "linear"),
        labels=labels, time_window=window,
        vmin=None if merged.get("vmin") is None else float(merged["vmin"]),
        vmax=None if merged.get("vmax") is None else float(merged["vmax"]),
        cmap=merged.get("cmap", "viridis"),
        title=merged.get("title"),
    )


def _parser(kind: str, description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f"plot-{kind}", description=description)
    parser.add_argument("--spec", help="flat key = value figure spec file")
    parser.add_argument("--input", action="append",
                        help="input path (repeatable; or ';'-separated)")
    parser.add_argument("--out", help="output image path")
    parser.add_argument("--scale", choices=("linear", "log-log", "semilog-y"))
    parser.add_argument("--labels", help="';'-separated series labels")
    parser.add_argument("--tmin", type=float, help="time window start")
    parser.add_argument("--tmax", type=float, help="time window end")
    parser.add_argument("--vmin", type=float, help="color scale lower bound")
    parser.add_argument("--vmax", type=float, help="color scale upper bound")
    parser.add_argument("--cmap", help="matplotlib colormap name")
    parser.add_argument("--title")
    return parser


def _run(kind: str, description: str, argv: Optional[list[str]]) -> int:
    args = _parser(kind, description).parse_args(argv)
    if args.input is not None:
        flat: list[str] = []
        for item in args.input:
            flat.extend(p for p in item.split(";") if p)
        args.input = flat
    try:
        spec = _build_spec(kind, args)
        path = render(spec)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


def main_heatmap(argv: Optional[list[str]] = None) -> int:
    return _run("heatmap",
                "space-time heatmap of a field dump (time axis downward)", argv)


def main_convergence(argv: Optional[list[str]] = None) -> int:
    return _run("convergence",
                "overlayed gap-surrogate curves from records.csv files", argv)


def main_sweep(argv: Optional[list[str]] = None) -> int:
    return _run("mesh_sweep",
                "per-mesh gap curves of a sweep output directory", argv)


if __name__ == "__main__":
    sys.exit(main_convergence())
