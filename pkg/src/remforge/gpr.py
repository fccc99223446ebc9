"""Shadow-fading regression: residual extraction and Matern-3/2 GP inference.

The measured-to-predicted RSS ratio at the samples, in dB, is the shadowing
residual. A zero-mean GP with Matern-3/2 covariance plus a noise floor is
fitted to those residuals by minimizing the negative log marginal likelihood
in log-parameter space, and predicts the residual at unsampled voxels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from remforge.numerics import NotPositiveDefiniteError, cholesky_with_jitter

_SIGMA_BOUNDS = (1e-6, 1e4)
_NEG_VARIANCE_TOL = 1e-9


def extract_shadow(t: np.ndarray, omega_hat: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Shadowing residual at each sample: 10*log10(measured / predicted) dB.

    Errors when any measured or model-predicted RSS is nonpositive, naming
    the offending sample indices; the ratio is undefined there.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    pred = phi @ np.asarray(omega_hat, dtype=float)
    bad = np.flatnonzero((t <= 0) | (pred <= 0))
    if bad.size:
        raise ValueError(
            f"nonpositive RSS at sample indices {bad.tolist()}: "
            "shadowing ratio undefined"
        )
    return 10.0 * np.log10(t / pred)


def _kernel(dist: np.ndarray, rho: float) -> np.ndarray:
    """Unit-variance Matern-3/2 kernel over a distance matrix."""
    u = np.sqrt(3.0) * dist / rho
    return (1.0 + u) * np.exp(-u)


def _kernel_drho(dist: np.ndarray, rho: float) -> np.ndarray:
    """Derivative of the unit-variance kernel with respect to rho."""
    u = np.sqrt(3.0) * dist / rho
    return u**2 * np.exp(-u) / rho


def _train_cov(eta, train_x):
    rho, sigma2, sigma_gp2 = eta
    dist = cdist(train_x, train_x)
    return sigma2 * _kernel(dist, rho) + sigma_gp2 * np.eye(len(train_x)), dist


def _validate_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (3,):
        raise ValueError("eta must be [rho, sigma2, sigma_gp2]")
    rho, sigma2, sigma_gp2 = eta
    if not rho > 0:
        raise ValueError("rho must be positive")
    if sigma2 < 0 or sigma_gp2 < 0:
        raise ValueError("variances must be nonnegative")
    return eta


def nlml(eta, train_x, train_y) -> float:
    """Negative log marginal likelihood of the residuals under the GP."""
    eta = _validate_eta(eta)
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    train_y = np.asarray(train_y, dtype=float)
    m = len(train_y)
    cov, _ = _train_cov(eta, train_x)
    (c_mat, lower), _ = cholesky_with_jitter(cov)
    quad = float(train_y @ cho_solve((c_mat, lower), train_y, check_finite=False))
    logdet = 2.0 * float(np.sum(np.log(np.diag(c_mat))))
    return 0.5 * quad + 0.5 * logdet + 0.5 * m * np.log(2.0 * np.pi)


def nlml_grad(eta, train_x, train_y) -> np.ndarray:
    """Analytic NLML gradient with respect to (rho, sigma2, sigma_gp2)."""
    eta = _validate_eta(eta)
    rho, sigma2, _ = eta
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    train_y = np.asarray(train_y, dtype=float)
    m = len(train_y)
    cov, dist = _train_cov(eta, train_x)
    factor, _ = cholesky_with_jitter(cov)
    alpha_v = cho_solve(factor, train_y, check_finite=False)
    cov_inv = cho_solve(factor, np.eye(m), check_finite=False)

    k1 = _kernel(dist, rho)
    d_cov = (
        sigma2 * _kernel_drho(dist, rho),  # d/d rho
        k1,  # d/d sigma2
        np.eye(m),  # d/d sigma_gp2
    )
    grad = np.empty(3)
    for j, dk in enumerate(d_cov):
        grad[j] = -0.5 * float(alpha_v @ dk @ alpha_v) + 0.5 * float(np.sum(cov_inv * dk))
    return grad


@dataclass(frozen=True)
class GPState:
    """Fitted shadowing GP: hyperparameters, training set and objective."""

    eta: np.ndarray
    train_x: np.ndarray = field(repr=False)
    train_y: np.ndarray = field(repr=False)
    nlml: float

    def __post_init__(self):
        eta = _validate_eta(self.eta)
        train_x = np.atleast_2d(np.asarray(self.train_x, dtype=float))
        train_y = np.asarray(self.train_y, dtype=float)
        if len(train_x) != len(train_y):
            raise ValueError("training inputs and outputs must match in length")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "train_x", train_x)
        object.__setattr__(self, "train_y", train_y)

    def to_dict(self) -> dict:
        rho, sigma2, sigma_gp2 = self.eta
        return {
            "rho_m": float(rho),
            "sigma2_db2": float(sigma2),
            "sigma_gp2_db2": float(sigma_gp2),
            "nlml": float(self.nlml),
            "m_train": int(len(self.train_y)),
        }


@dataclass(frozen=True)
class ShadowPrediction:
    """Predictive shadowing mean (dB) and latent variance (dB^2) per voxel."""

    mean: np.ndarray
    variance: np.ndarray
    variance_observed: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.variance, dtype=float)
        var_obs = np.asarray(self.variance_observed, dtype=float)
        if mean.shape != var.shape or mean.shape != var_obs.shape:
            raise ValueError("mean and variance lengths must agree")
        if np.any(var < 0):
            raise ValueError("negative predictive variance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "variance_observed", var_obs)


def _default_bounds(train_x: np.ndarray):
    dist = cdist(train_x, train_x)
    positive = dist[dist > 0]
    min_spacing = float(positive.min()) if positive.size else 1.0
    span = train_x.max(axis=0) - train_x.min(axis=0)
    diagonal = float(np.linalg.norm(span))
    if diagonal <= 0:
        diagonal = max(min_spacing, 1.0)
    return (0.1 * min_spacing, 10.0 * diagonal), _SIGMA_BOUNDS, _SIGMA_BOUNDS


def fit(
    train_x,
    train_y,
    init_eta=None,
    *,
    n_starts: int = 5,
    seed: int = 0,
    bounds=None,
) -> GPState:
    """Minimize the NLML over log-hyperparameters from multiple starts.

    The search runs in log space within box bounds (length scale tied to the
    training geometry, variances in a fixed dB^2 window). The best of all
    starts is returned; its NLML never exceeds any start's initial value.
    """
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    train_y = np.asarray(train_y, dtype=float)
    m = len(train_y)
    if m < 2:
        raise ValueError("need at least 2 training points")
    if bounds is None:
        bounds = _default_bounds(train_x)
    log_bounds = [(np.log(lo), np.log(hi)) for lo, hi in bounds]

    def objective(z):
        eta = np.exp(z)
        try:
            value = nlml(eta, train_x, train_y)
            grad = nlml_grad(eta, train_x, train_y) * eta
        except NotPositiveDefiniteError:
            return np.inf, np.zeros(3)
        return value, grad

    dist = cdist(train_x, train_x)
    positive = dist[dist > 0]
    med_dist = float(np.median(positive)) if positive.size else 1.0
    var_y = float(np.var(train_y))
    heuristic = np.array(
        [med_dist, max(var_y, 1e-3), max(0.05 * var_y, 1e-4)]
    )
    starts = [np.asarray(init_eta, dtype=float) if init_eta is not None else heuristic]
    rng = np.random.default_rng(seed)
    for _ in range(max(n_starts - 1, 0)):
        starts.append(np.exp([rng.uniform(lo, hi) for lo, hi in log_bounds]))

    best = None
    failures = 0
    for eta0 in starts:
        z0 = np.clip(np.log(np.maximum(eta0, 1e-300)), *zip(*log_bounds))
        try:
            res = minimize(
                objective,
                z0,
                jac=True,
                method="L-BFGS-B",
                bounds=log_bounds,
            )
        except NotPositiveDefiniteError:
            failures += 1
            continue
        if not np.isfinite(res.fun):
            failures += 1
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise NotPositiveDefiniteError(
            f"GP fit failed: all {failures} starts hit non-PD covariances"
        )
    return GPState(
        eta=np.exp(best.x), train_x=train_x, train_y=train_y, nlml=float(best.fun)
    )


def predict(state: GPState, test_x) -> ShadowPrediction:
    """Predictive mean and variance of the shadowing residual at new points.

    ``variance`` is the latent-field variance; ``variance_observed`` adds
    the fitted observation noise back, matching a hypothetical noisy
    re-measurement at the test point.
    """
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    rho, sigma2, sigma_gp2 = state.eta
    cov, _ = _train_cov(state.eta, state.train_x)
    factor, _ = cholesky_with_jitter(cov)
    k_star = sigma2 * _kernel(cdist(test_x, state.train_x), rho)
    mean = k_star @ cho_solve(factor, state.train_y, check_finite=False)
    v = cho_solve(factor, k_star.T, check_finite=False)
    variance = sigma2 - np.einsum("ij,ji->i", k_star, v)
    if np.any(variance < -_NEG_VARIANCE_TOL):
        worst = float(variance.min())
        raise ValueError(f"negative predictive variance {worst:.3e}")
    variance = np.maximum(variance, 0.0)
    return ShadowPrediction(
        mean=mean, variance=variance, variance_observed=variance + sigma_gp2
    )
