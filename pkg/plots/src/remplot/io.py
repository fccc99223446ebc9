"""Parsers for the remforge export formats."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

REM_COLUMNS = ("ix", "iy", "iz", "x_m", "y_m", "z_m", "rss_dbm")
SWEEP_COLUMNS = ("variable", "value", "seed", "mae_db", "wc_sbl_v", "m_samples", "wall_ms", "converged")


@dataclass(frozen=True)
class RemMap:
    """A voxel map in dBm, reshaped to (nx, ny, nz)."""

    dbm: np.ndarray
    spacing: tuple[float, float, float]

    @property
    def shape(self):
        return self.dbm.shape


def read_rem_csv(path) -> RemMap:
    """Load a map CSV (ix,iy,iz,x_m,y_m,z_m,rss_dbm) into a dense tensor."""
    rows = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != REM_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(REM_COLUMNS)}, got {header}")
        for line in reader:
            rows.append((int(line[0]), int(line[1]), int(line[2]),
                         float(line[3]), float(line[4]), float(line[5]), float(line[6])))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    nx, ny, nz = (int(arr[:, k].max()) + 1 for k in range(3))
    if len(rows) != nx * ny * nz:
        raise ValueError(f"{path}: {len(rows)} rows do not fill a {nx}x{ny}x{nz} grid")
    dbm = np.full((nx, ny, nz), np.nan)
    dbm[arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2].astype(int)] = arr[:, 6]
    if np.isnan(dbm).any():
        raise ValueError(f"{path}: duplicate or missing voxel rows")
    # voxel edge lengths from the first coordinate step on each axis
    def step(col, idx):
        cells = arr[arr[:, idx] == 1]
        base = arr[arr[:, idx] == 0]
        if cells.size == 0:
            return 1.0
        return float(cells[0, col] - base[0, col])

    spacing = (step(3, 0), step(4, 1), step(5, 2))
    return RemMap(dbm=dbm, spacing=spacing)


def read_sweep_csv(path) -> dict[str, np.ndarray]:
    """Load a sweep CSV into named columns (numeric where possible)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != SWEEP_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(SWEEP_COLUMNS)}, got {header}")
        raw = list(reader)
    if not raw:
        raise ValueError(f"{path}: no data rows")
    columns: dict[str, np.ndarray] = {}
    for j, name in enumerate(SWEEP_COLUMNS):
        values = [line[j] for line in raw]
        if name in ("variable", "converged"):
            columns[name] = np.array(values)
        else:
            columns[name] = np.array([float(v) for v in values])
    return columns
