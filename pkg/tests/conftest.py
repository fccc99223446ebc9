import numpy as np
import pytest

from remforge.channel import ChannelParams, build_dictionary
from remforge.grid import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def small_grid():
    return GridSpec(nx=4, ny=3, nz=2, dx=5.0, dy=5.0, dz=10.0)


@pytest.fixture
def desk_channel():
    return ChannelParams(fc=2.45e9, eta=2.0, d_ref=10.0)


def toy_dictionary_matrix(n_pts: int = 8, seed: int = 3, d_ref: float = 0.6) -> np.ndarray:
    """Small full-rank path-loss-style matrix over random points."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 4.0, size=(n_pts, 3))
    params = ChannelParams(fc=1e8, eta=2.0, d_ref=d_ref)
    from scipy.spatial.distance import cdist

    dist = cdist(pts, pts)
    phi = params.prefactor * (params.d_ref / np.maximum(dist, params.d_ref)) ** params.eta
    phi[dist <= params.d_ref] = 1.0
    return (phi + phi.T) / 2


@pytest.fixture
def toy_phi():
    return toy_dictionary_matrix()
