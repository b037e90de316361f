"""Figure construction from parsed run outputs.

Three figure kinds mirror the benchmark's reporting needs: space-time
heatmaps of a field dump (time axis oriented downward), convergence curves of
the optimality-gap surrogate from one or more record files, and the
mesh-independence overlay of a sweep directory.  Rendering is deterministic
and read-only over its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import read_field, read_records, read_summary, sweep_run_dirs

FIGURE_KINDS = ("heatmap", "convergence", "mesh_sweep")
SCALES = ("linear", "log-log", "semilog-y")

FIGSIZE = (6.4, 4.8)
DPI = 130


@dataclass
class FigureSpec:
    kind: str
    inputs: Sequence[str]
    out: str
    scale: str = "semilog-y"
    labels: Sequence[str] = field(default_factory=tuple)
    time_window: Optional[tuple[float, float]] = None
    vmin: Optional[float] = None
    vmax: Optional[float] = None
    cmap: str = "viridis"
    title: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        if not self.inputs:
            raise ValueError("at least one input path is required")
        for path in self.inputs:
            if not Path(path).exists():
                raise FileNotFoundError(path)


def _apply_scale(ax, scale: str) -> None:
    if scale == "log-log":
        ax.set_xscale("log")
        ax.set_yscale("log")
    elif scale == "semilog-y":
        ax.set_yscale("log")


def _render_heatmap(spec: FigureSpec, ax) -> None:
    dump = read_field(spec.inputs[0])
    if dump.d != 1:
        raise ValueError(f"heatmaps cover one-dimensional fields, got d={dump.d}")
    times = dump.times
    values = dump.values
    if spec.time_window is not None:
        lo, hi = spec.time_window
        keep = (times >= lo - 1e-12) & (times <= hi + 1e-12)
        times, values = times[keep], values[keep]
    if dump.kind == "v":  # one component per point in 1D
        values = values.reshape(values.shape[0], dump.N, -1)[:, :, 0]
    image = ax.imshow(
        values, aspect="auto", origin="upper", cmap=spec.cmap,
        vmin=spec.vmin, vmax=spec.vmax,
        extent=(0.0, 1.0, float(times[-1]), float(times[0])))
    ax.set_xlabel("x")
    ax.set_ylabel("t (downward)")
    plt.colorbar(image, ax=ax)
    ax.set_title(spec.title or f"{dump.kind} (N={dump.N}, T={dump.T})")


def _render_convergence(spec: FigureSpec, ax) -> None:
    for i, path in enumerate(spec.inputs):
        rec = read_records(path)
        label = spec.labels[i] if i < len(spec.labels) else Path(path).parent.name
        positive = rec["gamma_bar"] > 0
        ax.plot(rec["k"][positive], rec["gamma_bar"][positive], label=label)
    _apply_scale(ax, spec.scale)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("optimality gap surrogate")
    ax.legend()
    ax.set_title(spec.title or "convergence")


def _render_mesh_sweep(spec: FigureSpec, ax) -> None:
    sweep_dir = Path(spec.inputs[0])
    summary_path = sweep_dir / "summary.csv"
    if summary_path.exists():
        read_summary(summary_path)  # schema check only; legend uses dumps
    for run_dir in sweep_run_dirs(sweep_dir):
        rec = read_records(run_dir / "records.csv")
        dump = read_field(run_dir / "m_final.csv")
        label = f"h=1/{dump.N}, dt=1/{dump.T}"
        positive = rec["gamma_bar"] > 0
        ax.plot(rec["k"][positive], rec["gamma_bar"][positive], label=label)
    _apply_scale(ax, spec.scale)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("optimality gap surrogate")
    ax.legend()
    ax.set_title(spec.title or "mesh independence")


_RENDERERS = {"heatmap": _render_heatmap, "convergence": _render_convergence,
              "mesh_sweep": _render_mesh_sweep}


def render(spec: FigureSpec) -> Path:
    """Render one figure to ``spec.out`` and return the written path."""
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    try:
        _RENDERERS[spec.kind](spec, ax)
        out = Path(spec.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        # strip the creation timestamp so identical inputs give identical bytes
        fig.savefig(out, metadata={"Date": None} if out.suffix == ".png" else None)
    finally:
        plt.close(fig)
    return out
