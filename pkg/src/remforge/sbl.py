"""Sparse Bayesian learning recovery of the transmitter vector.

Type-II maximum likelihood over per-weight Gaussian precisions ``alpha`` and
a shared noise precision ``beta``, with Gamma hyperpriors. The posterior
covariance is computed through the matrix inversion lemma so the per-iteration
cost is governed by the sample count, not the voxel count. Weights whose
precision exceeds the pruning threshold are removed from the active set and
stay at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from remforge.numerics import NotPositiveDefiniteError, cholesky_with_jitter


@dataclass(frozen=True)
class SBLConfig:
    """Hyperpriors, pruning threshold and stopping rules.

    Parameters
    ----------
    a_gam, b_gam:
        Gamma shape/scale of the weight-precision hyperprior. Small values
        keep the prior nearly non-informative.
    c_gam, d_gam:
        Gamma shape/scale of the noise-precision hyperprior.
    thre_alpha:
        Weights whose precision grows beyond this threshold are pruned.
    iter_max:
        Iteration cap.
    tol:
        Convergence threshold on the evidence change between iterations.
    """

    a_gam: float = 1e-6
    b_gam: float = 1e-6
    c_gam: float = 0.0
    d_gam: float = 0.0
    thre_alpha: float = 1e10
    iter_max: int = 1000
    tol: float = 1e-4

    def __post_init__(self):
        for name in ("a_gam", "b_gam", "c_gam", "d_gam", "thre_alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.iter_max < 1:
            raise ValueError("iter_max must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SBLState:
    """Posterior state over the active (unpruned) weights."""

    n_total: int
    active: np.ndarray
    alpha: np.ndarray
    beta: float
    mu: np.ndarray
    sigma_omega: np.ndarray = field(repr=False)
    gamma: np.ndarray
    evidence_history: np.ndarray
    iterations: int
    converged: bool

    def __post_init__(self):
        active = np.asarray(self.active, dtype=int)
        if np.any((active < 0) | (active >= self.n_total)):
            raise IndexError("active index outside [0, N)")
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(
            self, "evidence_history", np.asarray(self.evidence_history, dtype=float)
        )

    @property
    def omega_hat(self) -> np.ndarray:
        """Posterior-mean weights expanded to full length, zeros where pruned."""
        out = np.zeros(self.n_total)
        out[self.active] = self.mu
        return out

    def to_dict(self) -> dict:
        return {
            "active": self.active.tolist(),
            "mu": self.mu.tolist(),
            "beta": float(self.beta),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "evidence_history": self.evidence_history.tolist(),
        }


def _check_posterior_inputs(phi, t, alpha, beta):
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(t, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    m, n_active = phi.shape
    if t.shape != (m,) or alpha.shape != (n_active,):
        raise ValueError("dimension mismatch between phi, t and alpha")
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("all weight precisions must be positive and finite")
    if not beta > 0:
        raise ValueError("noise precision must be positive")
    return phi, t, alpha


def posterior(phi: np.ndarray, t: np.ndarray, alpha: np.ndarray, beta: float, method: str = "auto"):
    """Posterior mean and covariance of the weights.

    ``method="woodbury"`` builds the sample-by-sample matrix
    ``Omega = Phi A^-1 Phi^T + beta^-1 I`` and applies the inversion lemma,
    which is the cheap direction when the active set outnumbers the samples.
    ``method="direct"`` inverts ``beta Phi^T Phi + A`` itself, the stable
    direction otherwise. Both produce the same posterior; ``"auto"`` picks
    by shape.
    """
    phi, t, alpha = _check_posterior_inputs(phi, t, alpha, beta)
    m, n_active = phi.shape
    if method == "auto":
        method = "woodbury" if n_active > m else "direct"
    if method == "direct":
        h = beta * phi.T @ phi + np.diag(alpha)
        try:
            factor, _ = cholesky_with_jitter(h, rel_jitter=1e-14)
        except NotPositiveDefiniteError as exc:
            raise ValueError(f"ill-conditioned evidence matrix: {exc}") from exc
        sigma = cho_solve(factor, np.eye(n_active), check_finite=False)
        sigma = (sigma + sigma.T) / 2.0
        mu = beta * cho_solve(factor, phi.T @ t, check_finite=False)
        return mu, sigma
    if method != "woodbury":
        raise ValueError(f"unknown posterior method {method!r}")
    a_inv = 1.0 / alpha
    g = phi * a_inv  # Phi A^-1
    omega_mat = g @ phi.T + np.eye(m) / beta
    try:
        factor, _ = cholesky_with_jitter(omega_mat, rel_jitter=1e-14)
    except NotPositiveDefiniteError as exc:
        raise ValueError(f"ill-conditioned evidence matrix: {exc}") from exc
    x = cho_solve(factor, g, check_finite=False)
    sigma = np.diag(a_inv) - g.T @ x
    sigma = (sigma + sigma.T) / 2.0
    mu = beta * (sigma @ (phi.T @ t))
    return mu, sigma


def _posterior_stats(phi, t, alpha, beta):
    """Posterior mean and covariance diagonal only (the loop's working set)."""
    phi, t, alpha = _check_posterior_inputs(phi, t, alpha, beta)
    m, n_active = phi.shape
    if n_active <= m:
        mu, sigma = posterior(phi, t, alpha, beta, method="direct")
        return mu, np.diag(sigma).copy()
    a_inv = 1.0 / alpha
    g = phi * a_inv
    omega_mat = g @ phi.T + np.eye(m) / beta
    try:
        factor, _ = cholesky_with_jitter(omega_mat, rel_jitter=1e-14)
    except NotPositiveDefiniteError as exc:
        raise ValueError(f"ill-conditioned evidence matrix: {exc}") from exc
    x = cho_solve(factor, g, check_finite=False)
    sigma_diag = a_inv - np.einsum("ij,ij->j", g, x)
    u = phi.T @ t
    mu = beta * (a_inv * u - g.T @ cho_solve(factor, g @ u, check_finite=False))
    return mu, sigma_diag


def _alpha_update(mu, sigma_diag, alpha, config: SBLConfig) -> np.ndarray:
    # gamma is clipped to [0, 1]: exact bounds that only float drift violates
    gamma = np.clip(1.0 - alpha * sigma_diag, 0.0, 1.0)
    num = gamma + 2.0 * config.a_gam
    den = mu**2 + 2.0 * config.b_gam
    # a coordinate with no effective information (numerator underflow) or no
    # weight mass (denominator zero) gets the pruning sentinel
    out = np.full_like(num, np.inf)
    ok = (den > 0.0) & (num > 0.0)
    out[ok] = num[ok] / den[ok]
    return out


def update_alpha(state: SBLState, config: SBLConfig) -> np.ndarray:
    """Fast fixed-point precision update: (gamma + 2a) / (mu^2 + 2b).

    A vanishing denominator yields the ``inf`` pruning sentinel.
    """
    return _alpha_update(state.mu, np.diag(state.sigma_omega), state.alpha, config)


def _beta_update(m, gamma_sum, resid2, config: SBLConfig) -> float:
    den = resid2 + 2.0 * config.d_gam
    if den == 0.0:
        raise ValueError("degenerate residual: exact fit leaves the noise precision undefined")
    # the effective parameter count never exceeds M; clamp float drift
    gamma_sum = min(gamma_sum, m * (1.0 - 1e-12))
    return float((m - gamma_sum + 2.0 * config.c_gam) / den)


def update_beta(state: SBLState, t: np.ndarray, phi: np.ndarray, config: SBLConfig) -> float:
    """Noise-precision update: (M - sum(gamma) + 2c) / (||t - Phi mu||^2 + 2d)."""
    t = np.asarray(t, dtype=float)
    resid = t - phi @ state.mu
    return _beta_update(t.size, float(np.sum(state.gamma)), float(resid @ resid), config)


def evidence(t, phi, alpha, beta, config: SBLConfig = SBLConfig()) -> float:
    """Log evidence of the hyperparameters (additive constant excluded).

    ``-(1/2)(log|Lam| + t^T Lam^-1 t) + sum(a log alpha - b alpha)
    + c log beta - d beta`` with ``Lam = beta^-1 I + Phi A^-1 Phi^T``.
    The ``-(M/2) log 2 pi`` constant is dropped so convergence deltas are
    unaffected.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    m = t.size
    lam = phi @ (phi / alpha).T + np.eye(m) / beta
    try:
        (c_mat, lower), _ = cholesky_with_jitter(lam, rel_jitter=1e-14)
    except NotPositiveDefiniteError as exc:
        raise ValueError(f"evidence matrix not positive definite: {exc}") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(c_mat))))
    quad = float(t @ cho_solve((c_mat, lower), t, check_finite=False))
    out = -0.5 * (logdet + quad)
    if alpha.size:
        if config.a_gam > 0:
            out += config.a_gam * float(np.sum(np.log(alpha)))
        if config.b_gam > 0:
            out -= config.b_gam * float(np.sum(alpha))
    if config.c_gam > 0:
        out += config.c_gam * np.log(beta)
    if config.d_gam > 0:
        out -= config.d_gam * beta
    return float(out)


def sbl_recover(phi: np.ndarray, t: np.ndarray, config: SBLConfig = SBLConfig()) -> SBLState:
    """Iterate posterior and hyperparameter updates until the evidence settles.

    Columns whose precision passes ``thre_alpha`` are pruned and stay at
    zero weight. Stops when the evidence change drops below ``config.tol``
    or after ``config.iter_max`` iterations. An exactly zero residual is
    treated as terminal convergence (a perfect fit carries no further
    information for the noise update).
    """
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(t, dtype=float)
    if phi.ndim != 2 or t.ndim != 1 or phi.shape[0] != t.size:
        raise ValueError("phi must be M x N with t of length M")
    m, n_total = phi.shape
    if m < 1:
        raise ValueError("need at least one measurement")

    active = np.arange(n_total)
    alpha = np.ones(n_total)
    var_t = float(np.var(t))
    beta = 100.0 / var_t if var_t > 0 else 100.0
    phi_act = phi

    mu = np.zeros(0)
    sigma = np.zeros((0, 0))
    gamma = np.zeros(0)
    converged = False
    iterations = 0
    history = [evidence(t, phi_act, alpha, beta, config)]

    sigma_diag = np.zeros(0)
    for it in range(1, config.iter_max + 1):
        iterations = it
        try:
            mu, sigma_diag = _posterior_stats(phi_act, t, alpha, beta)
            gamma = np.clip(1.0 - alpha * sigma_diag, 0.0, 1.0)
            alpha_new = _alpha_update(mu, sigma_diag, alpha, config)
            resid = t - phi_act @ mu
            resid2 = float(resid @ resid)
            if resid2 + 2.0 * config.d_gam == 0.0:
                converged = True
                break
            # cap keeps beta finite while the residual underflows toward an
            # exact fit; anything this large is already noiseless
            beta = min(_beta_update(m, float(np.sum(gamma)), resid2, config), 1e250)

            keep = alpha_new <= config.thre_alpha
            active = active[keep]
            alpha = alpha_new[keep]
            phi_act = phi_act[:, keep]
            if active.size == 0:
                mu = np.zeros(0)
                sigma = np.zeros((0, 0))
                gamma = np.zeros(0)
                converged = True
                break

            level = evidence(t, phi_act, alpha, beta, config)
        except ValueError as exc:
            raise ValueError(f"sbl iteration {it}: {exc}") from exc
        history.append(level)
        if abs(level - history[-2]) < config.tol:
            converged = True
            break

    if active.size:
        mu, sigma = posterior(phi_act, t, alpha, beta)
        gamma = np.clip(1.0 - alpha * np.diag(sigma), 0.0, 1.0)

    return SBLState(
        n_total=n_total,
        active=active,
        alpha=alpha,
        beta=beta,
        mu=mu,
        sigma_omega=sigma,
        gamma=gamma,
        evidence_history=np.asarray(history),
        iterations=iterations,
        converged=converged,
    )
