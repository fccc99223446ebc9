"""remplot: figures from remforge CSV artifacts (heatmaps and sweep curves)."""

from remplot.io import read_rem_csv, read_sweep_csv
from remplot.figures import FigureSpec, plot_curves, plot_heatmap

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "plot_heatmap",
    "plot_curves",
    "read_rem_csv",
    "read_sweep_csv",
    "__version__",
]
