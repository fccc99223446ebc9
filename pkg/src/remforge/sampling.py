"""Measurement design: PCA dictionary reduction and greedy sample selection.

The greedy criterion maximizes, at each step, the norm of the candidate row
projected onto the minimum eigenspace of the current design. Selection stops
once the minimum eigenvalue of the reduced design matrix reaches the
requested floor, or at the sample cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orth

_PROJECTOR_TOL = 1e-8


@dataclass(frozen=True)
class Dictionary:
    """Path-loss dictionary with its reduced representation.

    ``phi_p`` holds the rows of ``phi`` projected onto the top ``n_components``
    right singular directions; ``per_thr`` is the retained spectral-energy
    proportion (``None`` marks an unreduced dictionary where ``phi_p is phi``).
    """

    phi: np.ndarray = field(repr=False)
    phi_p: np.ndarray = field(repr=False)
    n_components: int
    per_thr: float | None
    basis: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n_rows = self.phi.shape[0]
        if self.phi.ndim != 2 or self.phi.shape[0] != self.phi.shape[1]:
            raise ValueError("phi must be square")
        if not 1 <= self.n_components <= n_rows:
            raise ValueError("need 1 <= n_components <= N")
        if self.phi_p.shape != (n_rows, self.n_components):
            raise ValueError("phi_p must be N x n_components")
        if self.basis is not None:
            gram = self.basis.T @ self.basis
            if not np.allclose(gram, np.eye(self.n_components), atol=1e-8):
                raise ValueError("PCA basis columns must be orthonormal")

    @property
    def n_voxels(self) -> int:
        return self.phi.shape[0]

    @classmethod
    def unreduced(cls, phi: np.ndarray) -> "Dictionary":
        """Wrap a dictionary without any reduction (phi_p is phi itself)."""
        phi = np.asarray(phi, dtype=float)
        return cls(phi=phi, phi_p=phi, n_components=phi.shape[0], per_thr=None)


def pca_reduce(phi: np.ndarray, per_thr: float) -> Dictionary:
    """Reduce a dictionary to the fewest singular directions holding
    ``per_thr`` of its squared spectral energy.

    The SVD is taken of ``phi`` as-is (no mean centering): the rows are
    regression atoms and centering would distort the design matrix built
    from them. ``per_thr == 1`` keeps every direction above the numerical
    rank tolerance.
    """
    if not 0.0 < per_thr <= 1.0:
        raise ValueError(f"per_thr must be in (0, 1], got {per_thr}")
    phi = np.asarray(phi, dtype=float)
    try:
        _, s, vt = np.linalg.svd(phi)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"SVD of dictionary failed: {exc}") from exc
    rank_tol = s[0] * max(phi.shape) * np.finfo(float).eps
    rank = max(int(np.sum(s > rank_tol)), 1)
    if per_thr == 1.0:
        n = rank
    else:
        energy = np.cumsum(s**2)
        n = int(np.argmax(energy >= per_thr * energy[-1] * (1.0 - 1e-12))) + 1
        n = min(n, rank)
    basis = vt[:n].T
    return Dictionary(phi=phi, phi_p=phi @ basis, n_components=n, per_thr=per_thr, basis=basis)


def wcev(h: np.ndarray) -> float:
    """Worst-case error variance of a design matrix: 1 / min-eigenvalue.

    Returns ``inf`` when the design is singular (not yet informative in
    every direction).
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("H must be square")
    if not np.allclose(h, h.T, atol=1e-8 * max(1.0, float(np.abs(h).max()))):
        raise ValueError("H must be symmetric")
    lam_min = float(np.linalg.eigvalsh(h)[0])
    if lam_min <= 0.0:
        return float("inf")
    return 1.0 / lam_min


def mse_trace(phi_sel: np.ndarray, beta: float) -> float:
    """Trace-inverse error proxy of a row selection: beta^-1 * sum(1/lambda).

    A rank-deficient selection returns the ``inf`` sentinel.
    """
    phi_sel = np.asarray(phi_sel, dtype=float)
    if not beta > 0:
        raise ValueError("noise precision must be positive")
    n_dims = phi_sel.shape[1]
    s = np.linalg.svd(phi_sel, compute_uv=False)
    tol = (s[0] if s.size else 0.0) * max(phi_sel.shape) * np.finfo(float).eps
    lam = s[s > tol] ** 2
    if lam.size < n_dims:
        return float("inf")
    return float(np.sum(1.0 / lam) / beta)


@dataclass(frozen=True)
class GreedyWorkspace:
    """Snapshot of one greedy step: chosen rows, projector, eigenpairs."""

    phi_t_p: np.ndarray = field(repr=False)
    projector: np.ndarray = field(repr=False)
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def phase1(cls, phi_t_p: np.ndarray, n_dims: int) -> "GreedyWorkspace":
        """Projector onto the orthogonal complement of the chosen rows."""
        phi_t_p = np.atleast_2d(np.asarray(phi_t_p, dtype=float))
        if phi_t_p.size == 0:
            return cls(phi_t_p=np.zeros((0, n_dims)), projector=np.eye(n_dims))
        theta = orth(phi_t_p.T)
        return cls(phi_t_p=phi_t_p, projector=np.eye(n_dims) - theta @ theta.T)

    @classmethod
    def phase2(cls, phi_t_p: np.ndarray) -> "GreedyWorkspace":
        """Projector onto the minimum eigenvector of the current design."""
        phi_t_p = np.atleast_2d(np.asarray(phi_t_p, dtype=float))
        h = phi_t_p.T @ phi_t_p
        eigvals, eigvecs = np.linalg.eigh(h)
        pi_min = eigvecs[:, 0]
        return cls(
            phi_t_p=phi_t_p,
            projector=np.outer(pi_min, pi_min),
            eigvals=eigvals,
            eigvecs=eigvecs,
        )


@dataclass(frozen=True)
class MeasurementPlan:
    """An ordered set of sampled voxels with design diagnostics."""

    n_voxels: int
    selected: np.ndarray
    lambda_min_history: np.ndarray
    satisfied: bool
    method: str = "snlo"
    per_thr: float | None = None
    lambda_wcev: float | None = None

    def __post_init__(self):
        selected = np.asarray(self.selected, dtype=int)
        hist = np.asarray(self.lambda_min_history, dtype=float)
        if selected.ndim != 1:
            raise ValueError("selected must be a 1-D index list")
        if len(set(selected.tolist())) != selected.size:
            raise ValueError("selected contains duplicates")
        if selected.size and np.any((selected < 0) | (selected >= self.n_voxels)):
            raise IndexError("selected index out of range")
        if hist.size not in (0, selected.size):
            raise ValueError("lambda_min_history length must be 0 or M")
        object.__setattr__(self, "selected", selected)
        object.__setattr__(self, "lambda_min_history", hist)

    @property
    def m_samples(self) -> int:
        return int(self.selected.size)

    @property
    def r(self) -> float:
        return self.m_samples / self.n_voxels

    def psi(self) -> np.ndarray:
        """Binary row-selection matrix (M x N, one 1 per row)."""
        out = np.zeros((self.m_samples, self.n_voxels))
        out[np.arange(self.m_samples), self.selected] = 1.0
        return out

    def to_dict(self) -> dict:
        return {
            "N": self.n_voxels,
            "M": self.m_samples,
            "per_thr": self.per_thr,
            "lambda_wcev": self.lambda_wcev,
            "selected": self.selected.tolist(),
            "lambda_min_history": self.lambda_min_history.tolist(),
            "satisfied": bool(self.satisfied),
        }

    @classmethod
    def from_dict(cls, doc: dict, method: str = "snlo") -> "MeasurementPlan":
        return cls(
            n_voxels=int(doc["N"]),
            selected=np.asarray(doc["selected"], dtype=int),
            lambda_min_history=np.asarray(doc["lambda_min_history"], dtype=float),
            satisfied=bool(doc["satisfied"]),
            method=method,
            per_thr=doc.get("per_thr"),
            lambda_wcev=doc.get("lambda_wcev"),
        )


def _argmax_lowest_index(scores: np.ndarray, rel_tol: float = 1e-9) -> int:
    """Index of the maximum score, ties resolved to the lowest index.

    Scores within ``rel_tol`` of the maximum count as tied, so exact
    geometric ties (and their float-rounding images under an orthogonal
    change of basis) resolve identically no matter how the scores were
    computed.
    """
    top = float(np.max(scores))
    if not np.isfinite(top):
        return int(np.argmax(scores))
    cutoff = top - rel_tol * max(abs(top), 1e-300)
    return int(np.argmax(scores >= cutoff))


def _greedy_trace(dictionary: Dictionary, m_max: int):
    """Run the greedy selection to ``m_max`` steps, ignoring any stop floor.

    Returns ``(selected, lambda_min_history)``. Because each step depends
    only on the rows already chosen, a shorter plan is a prefix of a longer
    one; callers may slice the trace.
    """
    rows = dictionary.phi_p
    n_rows, n_dims = rows.shape
    if not 1 <= m_max <= n_rows:
        raise ValueError(f"m_max must be in [1, {n_rows}], got {m_max}")

    row_norms2 = np.einsum("ij,ij->i", rows, rows)
    # squared projection of every row onto the span of the selected rows,
    # maintained incrementally from an orthonormal basis of that span
    proj2 = np.zeros(n_rows)
    basis: list[np.ndarray] = []
    selected: list[int] = []
    taken = np.zeros(n_rows, dtype=bool)
    history = np.zeros(m_max)

    for t in range(1, m_max + 1):
        if t <= n_dims:
            scores = np.maximum(row_norms2 - proj2, 0.0)
        else:
            ws = GreedyWorkspace.phase2(rows[selected])
            scores = (rows @ ws.eigvecs[:, 0]) ** 2
        scores[taken] = -np.inf
        pick = _argmax_lowest_index(scores)
        selected.append(pick)
        taken[pick] = True

        if t <= n_dims:
            # extend the orthonormal basis with the chosen row's residual
            v = rows[pick].copy()
            for q in basis:
                v -= (q @ rows[pick]) * q
            nrm = np.linalg.norm(v)
            if nrm > 1e-13 * max(np.sqrt(row_norms2[pick]), 1.0):
                q = v / nrm
                # one re-orthogonalization pass for numerical hygiene
                for prev in basis:
                    q -= (prev @ q) * prev
                q /= np.linalg.norm(q)
                basis.append(q)
                proj2 += (rows @ q) ** 2
            history[t - 1] = 0.0 if t < n_dims else _lambda_min(rows[selected])
        else:
            history[t - 1] = _lambda_min(rows[selected])
    return np.asarray(selected, dtype=int), history


def _lambda_min(phi_sel: np.ndarray) -> float:
    h = phi_sel.T @ phi_sel
    return float(np.linalg.eigvalsh(h)[0])


def plan_from_trace(
    dictionary: Dictionary,
    trace: tuple[np.ndarray, np.ndarray],
    lambda_wcev: float | None = None,
    m: int | None = None,
) -> MeasurementPlan:
    """Cut a greedy trace into a plan, applying the stop floor if given.

    With ``lambda_wcev`` set, the plan ends at the first step ``t >= n``
    whose minimum eigenvalue reaches the floor; otherwise at ``m`` steps.
    The result is identical to running the greedy selection directly with
    the same stopping arguments.
    """
    selected, history = trace
    n_dims = dictionary.n_components
    limit = selected.size if m is None else int(m)
    if limit > selected.size:
        raise ValueError("trace shorter than requested plan size")
    satisfied = True
    stop = limit
    if lambda_wcev is not None:
        satisfied = False
        for t in range(n_dims, limit + 1):
            if history[t - 1] >= lambda_wcev:
                satisfied = True
                stop = t
                break
    return MeasurementPlan(
        n_voxels=dictionary.n_voxels,
        selected=selected[:stop],
        lambda_min_history=history[:stop],
        satisfied=satisfied,
        method="snlo",
        per_thr=dictionary.per_thr,
        lambda_wcev=lambda_wcev,
    )


def greedy_select(
    dictionary: Dictionary,
    lambda_wcev: float | None = None,
    m_max: int | None = None,
) -> MeasurementPlan:
    """Greedy minimum-eigenvalue sample selection.

    Picks, at every step, the unselected dictionary row with the largest
    squared norm after projection onto the minimum eigenspace of the current
    design (the orthogonal complement of the chosen rows while the design is
    rank deficient, the minimum eigenvector afterwards). Ties break to the
    lowest voxel index. Stops at the first step where the design's minimum
    eigenvalue reaches ``lambda_wcev``, or at ``m_max`` samples with
    ``satisfied=False``.
    """
    if lambda_wcev is not None and not lambda_wcev > 0:
        raise ValueError("lambda_wcev must be positive")
    m_max = dictionary.n_voxels if m_max is None else int(m_max)
    trace = _greedy_trace(dictionary, m_max)
    return plan_from_trace(dictionary, trace, lambda_wcev=lambda_wcev, m=m_max)


def random_plan(n_voxels: int, m: int, seed) -> MeasurementPlan:
    """Uniform sampling without replacement; the random baseline."""
    if m > n_voxels:
        raise ValueError(f"cannot draw {m} samples from {n_voxels} voxels")
    if m < 0:
        raise ValueError("sample count must be nonnegative")
    rng = np.random.default_rng(seed)
    selected = rng.choice(n_voxels, size=m, replace=False)
    return MeasurementPlan(
        n_voxels=n_voxels,
        selected=selected,
        lambda_min_history=np.zeros(0),
        satisfied=True,
        method="random",
    )
