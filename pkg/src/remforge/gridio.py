"""Grid export format: CSV with voxel indices, coordinates and dBm values."""

from __future__ import annotations

import csv

import numpy as np

from remforge.grid import GridSpec, RemTensor
from remforge.numerics import db_to_linear, linear_to_db

REM_CSV_COLUMNS = ("ix", "iy", "iz", "x_m", "y_m", "z_m", "rss_dbm")


def write_rem_csv(tensor: RemTensor, path) -> None:
    """One row per voxel in linear-index order; power in dBm."""
    grid = tensor.grid
    centers = grid.centers()
    dbm = linear_to_db(tensor.values)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REM_CSV_COLUMNS)
        for n in range(grid.n_voxels):
            ix, iy, iz = grid.decompose(n)
            x, y, z = centers[n]
            writer.writerow([ix, iy, iz, f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", f"{dbm[n]:.9g}"])


def read_rem_csv(path, grid: GridSpec) -> RemTensor:
    """Load a map written by :func:`write_rem_csv`, validated against ``grid``."""
    values = np.full(grid.n_voxels, np.nan)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != REM_CSV_COLUMNS:
            raise ValueError(f"unexpected header in {path}: {header}")
        count = 0
        for row in reader:
            ix, iy, iz = int(row[0]), int(row[1]), int(row[2])
            n = grid.linear_index(ix, iy, iz)
            values[n] = db_to_linear(float(row[6]))
            count += 1
    if count != grid.n_voxels or np.any(np.isnan(values)):
        raise ValueError(
            f"{path} holds {count} rows; grid expects {grid.n_voxels} distinct voxels"
        )
    return RemTensor(grid=grid, values=values)
