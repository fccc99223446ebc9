"""Voxelized 3D region of interest and index/coordinate conversions.

The single layout contract for the whole library: linear indices are
column-major, ``n = ix + nx*iy + nx*ny*iz`` (x fastest, then y, then z),
and voxel centers are the canonical representative points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform voxel grid over a 3D box."""

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("dx", "dy", "dz"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")
        if len(self.origin) != 3:
            raise ValueError("origin must be a 3-vector")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def spacing(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz])

    @property
    def extent(self) -> np.ndarray:
        """Side lengths of the region box in meters."""
        return np.array([self.nx * self.dx, self.ny * self.dy, self.nz * self.dz])

    def decompose(self, n: int) -> tuple[int, int, int]:
        """Split a linear index into ``(ix, iy, iz)``."""
        if not 0 <= n < self.n_voxels:
            raise IndexError(f"index out of grid: {n} not in [0, {self.n_voxels})")
        iz, rem = divmod(int(n), self.nx * self.ny)
        iy, ix = divmod(rem, self.nx)
        return ix, iy, iz

    def linear_index(self, ix: int, iy: int, iz: int) -> int:
        if not (0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= iz < self.nz):
            raise IndexError(f"index out of grid: ({ix}, {iy}, {iz})")
        return ix + self.nx * iy + self.nx * self.ny * iz

    def centers(self) -> np.ndarray:
        """All voxel centers as an ``(N, 3)`` array in linear-index order."""
        ox, oy, oz = self.origin
        cx = ox + (np.arange(self.nx) + 0.5) * self.dx
        cy = oy + (np.arange(self.ny) + 0.5) * self.dy
        cz = oz + (np.arange(self.nz) + 0.5) * self.dz
        gx, gy, gz = np.meshgrid(cx, cy, cz, indexing="ij")
        return np.stack(
            [gx.ravel(order="F"), gy.ravel(order="F"), gz.ravel(order="F")], axis=1
        )


def voxel_center(grid: GridSpec, n: int) -> np.ndarray:
    """Center coordinates of the voxel with linear index ``n``, in meters."""
    ix, iy, iz = grid.decompose(n)
    ox, oy, oz = grid.origin
    return np.array([ox + (ix + 0.5) * grid.dx, oy + (iy + 0.5) * grid.dy, oz + (iz + 0.5) * grid.dz])


def reshape_vector_to_tensor(grid: GridSpec, x: np.ndarray) -> np.ndarray:
    """Reshape a length-N vector into the ``nx x ny x nz`` tensor (column-major)."""
    x = np.asarray(x)
    if x.shape != (grid.n_voxels,):
        raise ValueError(f"expected vector of length {grid.n_voxels}, got shape {x.shape}")
    return x.reshape((grid.nx, grid.ny, grid.nz), order="F")


def flatten_tensor_to_vector(grid: GridSpec, tensor: np.ndarray) -> np.ndarray:
    """Inverse of :func:`reshape_vector_to_tensor`; exact round-trip."""
    tensor = np.asarray(tensor)
    if tensor.shape != (grid.nx, grid.ny, grid.nz):
        raise ValueError(
            f"expected tensor of shape {(grid.nx, grid.ny, grid.nz)}, got {tensor.shape}"
        )
    return tensor.ravel(order="F")


@dataclass(frozen=True)
class RemTensor:
    """A receive-power map over a grid, linear power units (mW)."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_voxels,):
            raise ValueError(
                f"values length {values.shape} does not match grid N={self.grid.n_voxels}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("RSS values must be finite")
        if np.any(values < 0):
            raise ValueError("RSS values must be nonnegative (linear power)")
        object.__setattr__(self, "values", values)

    def as_tensor(self) -> np.ndarray:
        return reshape_vector_to_tensor(self.grid, self.values)
