"""Shared numerical helpers: dB conversions and jittered Cholesky."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

# Linear powers below this floor are clamped before any dB conversion so that
# exact zeros (pruned voxels) stay finite on the dB scale.
DB_FLOOR_MW = 1e-15


def db_to_linear(db):
    """Convert dB (or dBm) values to linear scale."""
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin, floor: float = DB_FLOOR_MW):
    """Convert linear power to dB, clamping at `floor` to keep the log finite."""
    return 10.0 * np.log10(np.maximum(np.asarray(lin, dtype=float), floor))


class NotPositiveDefiniteError(ValueError):
    """A covariance-like matrix stayed non positive definite after jitter."""


def cholesky_with_jitter(mat: np.ndarray, rel_jitter: float = 1e-10, max_doublings: int = 8):
    """Lower-triangular Cholesky factor of a symmetric PSD-ish matrix.

    Retries with additive diagonal jitter starting at ``rel_jitter`` times the
    mean diagonal, doubling up to ``max_doublings`` times. Raises
    :class:`NotPositiveDefiniteError` if every attempt fails.

    Returns ``(factor, jitter_used)`` where ``factor`` is the ``cho_factor``
    pair consumable by :func:`scipy.linalg.cho_solve`.
    """
    mat = np.asarray(mat, dtype=float)
    scale = float(np.mean(np.diag(mat)))
    if scale <= 0.0:
        scale = 1.0
    jitter = 0.0
    eye = np.eye(mat.shape[0])
    for attempt in range(max_doublings + 2):
        try:
            factor = cho_factor(mat + jitter * eye, lower=True, check_finite=False)
            return factor, jitter
        except np.linalg.LinAlgError:
            pass
        except ValueError:
            # scipy raises ValueError on NaN/inf input
            raise NotPositiveDefiniteError("covariance not PD: non-finite entries")
        jitter = rel_jitter * scale if jitter == 0.0 else 2.0 * jitter
    raise NotPositiveDefiniteError(
        f"covariance not PD after {max_doublings} jitter doublings (scale={scale:.3e})"
    )


def solve_psd(mat: np.ndarray, rhs: np.ndarray, rel_jitter: float = 1e-10):
    """Solve ``mat @ x = rhs`` for symmetric positive definite ``mat``."""
    factor, _ = cholesky_with_jitter(mat, rel_jitter=rel_jitter)
    return cho_solve(factor, rhs, check_finite=False)
