"""Channel model: path-loss dictionary, shadow-field synthesis, measurements.

All power bookkeeping is linear mW. dB enters only through the shadow field,
which is drawn in dB and converted to a multiplicative linear factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from remforge.grid import GridSpec, RemTensor
from remforge.numerics import cholesky_with_jitter

# Dense N x N synthesis (dictionary, shadow covariance) is capped to keep the
# desk-scale tool honest about memory; large scenes are out of scope.
MAX_DENSE_VOXELS = 20_000

SPEED_OF_LIGHT = 3.0e8


@dataclass(frozen=True)
class ChannelParams:
    """Distance-power-law channel with antenna gains and a near-field plateau."""

    gt: float = 1.0
    gr: float = 1.0
    fc: float = 2.45e9
    c_light: float = SPEED_OF_LIGHT
    eta: float = 2.0
    d_ref: float = 1.0

    def __post_init__(self):
        if not self.fc > 0:
            raise ValueError("carrier frequency must be positive")
        if not self.d_ref > 0:
            raise ValueError("reference distance must be positive")
        if self.eta < 0:
            raise ValueError("path-loss exponent must be nonnegative")
        if not (self.gt > 0 and self.gr > 0):
            raise ValueError("antenna gains must be positive")
        if not self.c_light > 0:
            raise ValueError("speed of light must be positive")

    @property
    def prefactor(self) -> float:
        """Gain at the reference distance: Gt*Gr*c^2 / (4*pi*fc^2)."""
        return self.gt * self.gr * self.c_light**2 / (4.0 * np.pi * self.fc**2)


def path_loss(params: ChannelParams, a, b) -> float:
    """Propagation gain between two points; 1 inside the reference distance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("coordinates must be finite")
    d = float(np.linalg.norm(a - b))
    if d <= params.d_ref:
        return 1.0
    return params.prefactor * (params.d_ref / d) ** params.eta


def build_dictionary(grid: GridSpec, params: ChannelParams) -> np.ndarray:
    """Pairwise path-loss gains between all voxel centers (N x N, symmetric)."""
    n = grid.n_voxels
    if n > MAX_DENSE_VOXELS:
        raise ValueError(
            f"grid has {n} voxels; dense dictionary synthesis is capped at "
            f"{MAX_DENSE_VOXELS} (reduce the grid)"
        )
    pts = grid.centers()
    dist = cdist(pts, pts)
    near = dist <= params.d_ref
    with np.errstate(divide="ignore"):
        phi = params.prefactor * (params.d_ref / np.where(near, np.inf, dist)) ** params.eta
    phi[near] = 1.0
    # enforce exact symmetry against cdist rounding asymmetries
    return (phi + phi.T) / 2.0


@dataclass(frozen=True)
class SourceField:
    """Sparse transmitter vector: K voxels with positive linear power (mW)."""

    grid: GridSpec
    omega: np.ndarray = field(repr=False)
    support: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        support = np.asarray(self.support, dtype=int)
        powers = np.asarray(self.powers, dtype=float)
        n = self.grid.n_voxels
        if omega.shape != (n,):
            raise ValueError("omega length must equal grid voxel count")
        if support.shape != powers.shape or support.ndim != 1:
            raise ValueError("support and powers must be matching 1-D arrays")
        if len(set(support.tolist())) != len(support):
            raise ValueError("duplicate source voxels")
        if np.any((support < 0) | (support >= n)):
            raise IndexError("source voxel index out of grid")
        if np.any(powers <= 0):
            raise ValueError("source powers must be positive")
        k = len(support)
        if k >= n:
            raise ValueError(f"need K < N sources, got K={k}, N={n}")
        nz = np.flatnonzero(omega)
        if sorted(nz.tolist()) != sorted(support.tolist()):
            raise ValueError("omega support does not match source list")
        if not np.allclose(omega[support], powers):
            raise ValueError("omega values do not match source powers")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "powers", powers)

    @property
    def k_sources(self) -> int:
        return len(self.support)

    def positions(self) -> np.ndarray:
        """Transmitter coordinates (K x 3), meters."""
        return self.grid.centers()[self.support]

    @classmethod
    def from_indices(cls, grid: GridSpec, indices, powers_mw) -> "SourceField":
        indices = np.asarray(indices, dtype=int)
        powers_mw = np.broadcast_to(np.asarray(powers_mw, dtype=float), indices.shape).copy()
        omega = np.zeros(grid.n_voxels)
        omega[indices] = powers_mw
        return cls(grid=grid, omega=omega, support=indices, powers=powers_mw)

    @classmethod
    def random(cls, grid: GridSpec, k: int, power_mw: float, seed) -> "SourceField":
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(grid.n_voxels, size=k, replace=False))
        return cls.from_indices(grid, indices, np.full(k, float(power_mw)))


@dataclass(frozen=True)
class ShadowModel:
    """Log-normal shadow fading with a Matern-3/2 spatial covariance (dB scale)."""

    sigma2: float
    rho: float
    order: float = 1.5

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("shadow variance must be nonnegative")
        if not self.rho > 0:
            raise ValueError("spatial decay length must be positive")
        if self.order != 1.5:
            raise ValueError("only the 3/2 covariance order is supported")


def matern32(model: ShadowModel, d) -> np.ndarray | float:
    """Matern covariance of order 3/2: sigma2*(1+sqrt(3)d/rho)*exp(-sqrt(3)d/rho)."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    u = np.sqrt(3.0) * d / model.rho
    out = model.sigma2 * (1.0 + u) * np.exp(-u)
    return out if out.ndim else float(out)


def shadow_covariance(points: np.ndarray, model: ShadowModel) -> np.ndarray:
    """Matern-3/2 covariance matrix over a set of coordinates."""
    return matern32(model, cdist(points, points))


def sample_shadow_field(grid: GridSpec, model: ShadowModel, seed) -> np.ndarray:
    """Draw one shadow-field realization over all voxels, linear scale.

    The field is Gaussian in dB with zero mean and Matern-3/2 covariance;
    the returned vector is its linear form 10^(dB/10).
    """
    n = grid.n_voxels
    if model.sigma2 == 0.0:
        return np.ones(n)
    if n > MAX_DENSE_VOXELS:
        raise ValueError(
            f"grid has {n} voxels; dense covariance synthesis is capped at {MAX_DENSE_VOXELS}"
        )
    cov = shadow_covariance(grid.centers(), model)
    (c, lower), _ = cholesky_with_jitter(cov)
    chol = np.tril(c) if lower else np.triu(c).T
    rng = np.random.default_rng(seed)
    xi_db = chol @ rng.standard_normal(n)
    return 10.0 ** (xi_db / 10.0)


def synthesize_truth(
    grid: GridSpec, phi: np.ndarray, sources: SourceField, shadow_field: np.ndarray
) -> RemTensor:
    """Ground-truth map: shadow-weighted superposition of source path gains."""
    shadow_field = np.asarray(shadow_field, dtype=float)
    n = grid.n_voxels
    if phi.shape != (n, n):
        raise ValueError(f"dictionary shape {phi.shape} does not match grid N={n}")
    if shadow_field.shape != (n,):
        raise ValueError("shadow field length does not match grid")
    x = shadow_field * (phi[:, sources.support] @ sources.powers)
    return RemTensor(grid=grid, values=x)


@dataclass(frozen=True)
class Observations:
    """Noisy RSS readings at the sampled voxels, linear mW."""

    t: np.ndarray
    sigma0_2: float
    sample_indices: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        idx = np.asarray(self.sample_indices, dtype=int)
        if t.shape != idx.shape or t.ndim != 1:
            raise ValueError("t and sample_indices must be matching 1-D arrays")
        if not np.all(np.isfinite(t)):
            raise ValueError("observations must be finite")
        if self.sigma0_2 < 0:
            raise ValueError("noise variance must be nonnegative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "sample_indices", idx)

    @property
    def m_samples(self) -> int:
        return len(self.t)


def measure(truth: RemTensor, plan, sigma0_2: float, seed) -> Observations:
    """Sample the truth at the plan's voxels with i.i.d. Gaussian noise.

    The noise realization is drawn per voxel and indexed by the plan, so two
    plans measured with the same seed see identical noise wherever they
    share a voxel.
    """
    selected = np.asarray(plan.selected if hasattr(plan, "selected") else plan, dtype=int)
    n = truth.grid.n_voxels
    if selected.size and np.any((selected < 0) | (selected >= n)):
        raise IndexError("plan index out of grid")
    t = truth.values[selected].copy()
    if sigma0_2 > 0 and selected.size:
        rng = np.random.default_rng(seed)
        t = t + np.sqrt(sigma0_2) * rng.standard_normal(n)[selected]
    return Observations(t=t, sigma0_2=float(sigma0_2), sample_indices=selected)
