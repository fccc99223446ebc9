"""Figure rendering: altitude-slice heatmap pairs and sweep curves.

Output PNGs carry fixed metadata (no timestamps), so rerunning on the same
inputs reproduces the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from remplot.io import read_rem_csv, read_sweep_csv

_PNG_METADATA = {"Software": "remplot"}
_DPI = 120


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: inputs, kind, slice and color bounds."""

    inputs: tuple[str, ...]
    kind: str
    output: str
    z_index: int = 0
    vmin: float | None = None
    vmax: float | None = None

    def __post_init__(self):
        if self.kind not in ("heatmap", "curve"):
            raise ValueError(f"figure kind must be heatmap or curve, got {self.kind!r}")
        for path in self.inputs:
            if not Path(path).exists():
                raise FileNotFoundError(path)


def _color_bounds(truth_dbm, vmin, vmax):
    if vmin is None:
        vmin = float(np.percentile(truth_dbm, 1.0))
    if vmax is None:
        vmax = float(np.percentile(truth_dbm, 99.0))
    if vmax <= vmin:
        vmax = vmin + 1.0
    return vmin, vmax


def render_heatmap(truth_csv, estimate_csv, z_index=0, vmin=None, vmax=None):
    """Build the two-panel figure; returns (figure, imshow arrays, bounds)."""
    truth = read_rem_csv(truth_csv)
    estimate = read_rem_csv(estimate_csv)
    if truth.shape != estimate.shape:
        raise ValueError(
            f"grids differ: truth {truth.shape} vs estimate {estimate.shape}"
        )
    if not 0 <= z_index < truth.shape[2]:
        raise ValueError(f"z index {z_index} outside 0..{truth.shape[2] - 1}")
    vmin, vmax = _color_bounds(truth.dbm, vmin, vmax)
    slices = (truth.dbm[:, :, z_index].T, estimate.dbm[:, :, z_index].T)

    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.2), constrained_layout=True)
    for ax, data, title in zip(axes, slices, ("truth", "estimate")):
        im = ax.imshow(
            data, origin="lower", vmin=vmin, vmax=vmax,
            cmap="viridis", interpolation="nearest",
        )
        ax.set_title(title)
        ax.set_xlabel("x voxel")
        ax.set_ylabel("y voxel")
    fig.colorbar(im, ax=axes, label="RSS (dBm)", shrink=0.85)
    return fig, slices, (vmin, vmax)


def plot_heatmap(truth_csv, estimate_csv, z_index, output, vmin=None, vmax=None) -> dict:
    """Side-by-side truth/estimate dBm slices with a shared color scale."""
    fig, slices, bounds = render_heatmap(truth_csv, estimate_csv, z_index, vmin, vmax)
    fig.savefig(output, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)
    return {
        "output": str(output),
        "panel_shape": slices[0].shape,
        "vmin": bounds[0],
        "vmax": bounds[1],
        "max_abs_panel_difference": float(np.max(np.abs(slices[0] - slices[1]))),
    }


def render_curves(sweep_csv, x_column, y_column):
    """Median line with an interquartile band across seeds per x value."""
    table = read_sweep_csv(sweep_csv)
    for name in (x_column, y_column):
        if name not in table:
            raise ValueError(f"column {name!r} not in {sweep_csv} (has {sorted(table)})")
    x = table[x_column]
    y = table[y_column]
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size == 0:
        raise ValueError(f"no finite rows for {y_column!r} vs {x_column!r}")
    levels = np.unique(x)
    median = np.array([np.median(y[x == v]) for v in levels])
    q25 = np.array([np.percentile(y[x == v], 25) for v in levels])
    q75 = np.array([np.percentile(y[x == v], 75) for v in levels])
    counts = np.array([np.sum(x == v) for v in levels])

    fig, ax = plt.subplots(figsize=(6.0, 4.2), constrained_layout=True)
    if np.any(counts > 1):
        ax.fill_between(levels, q25, q75, alpha=0.25, linewidth=0, label="interquartile")
    ax.plot(levels, median, marker="o", label="median")
    ax.set_xlabel(x_column)
    ax.set_ylabel(y_column)
    ax.legend(loc="best")
    return fig, {"levels": levels, "median": median, "q25": q25, "q75": q75}


def plot_curves(sweep_csv, x_column, y_column, output) -> dict:
    """Aggregate a sweep CSV across seeds and render the trend curve."""
    fig, stats = render_curves(sweep_csv, x_column, y_column)
    fig.savefig(output, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)
    return {
        "output": str(output),
        "levels": stats["levels"].tolist(),
        "median": stats["median"].tolist(),
    }
