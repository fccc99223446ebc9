"""End-to-end runs: synthesize, plan, measure, recover, reconstruct, score.

Each stage is timed and failures carry the stage name. A full run is
reproducible from ``(config, seed)``: stage RNGs derive from the run seed
through a fixed-order seed sequence.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from remforge import channel as ch
from remforge import gpr as gp
from remforge import sampling as sp
from remforge.config import ExperimentConfig
from remforge.grid import RemTensor
from remforge.numerics import linear_to_db
from remforge.sbl import SBLState, sbl_recover

SWEEP_CSV_COLUMNS = (
    "variable", "value", "seed", "mae_db", "wc_sbl_v",
    "m_samples", "wall_ms", "converged",
)

SWEEP_VARIABLES = ("r", "snr_db", "per_thr")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunResult:
    """Everything produced by one end-to-end run."""

    seed: int
    config_digest: str
    truth: RemTensor
    estimate: RemTensor
    omega_hat: np.ndarray
    shadow_est: np.ndarray
    plan: sp.MeasurementPlan
    observations: ch.Observations
    sbl_state: SBLState
    gp_state: gp.GPState | None
    mae_db: float
    wc_sbl_v: float
    sigma0_2: float
    timings_ms: dict = field(repr=False)

    def to_manifest(self) -> dict:
        """JSON-safe summary; excludes wall-clock timings (see timings_ms)."""
        return {
            "seed": int(self.seed),
            "config_digest": self.config_digest,
            "mae_db": float(self.mae_db),
            "wc_sbl_v": float(self.wc_sbl_v),
            "sigma0_2": float(self.sigma0_2),
            "m_samples": int(self.plan.m_samples),
            "plan": self.plan.to_dict(),
            "sbl": self.sbl_state.to_dict(),
            "gpr": None if self.gp_state is None else self.gp_state.to_dict(),
        }


def reconstruct(grid, phi: np.ndarray, omega_hat: np.ndarray, shadow_est: np.ndarray) -> RemTensor:
    """Assemble the estimated map: shadow factor times dictionary response."""
    omega_hat = np.asarray(omega_hat, dtype=float)
    shadow_est = np.asarray(shadow_est, dtype=float)
    n = grid.n_voxels
    if phi.shape != (n, n) or omega_hat.shape != (n,) or shadow_est.shape != (n,):
        raise ValueError("dimension mismatch between grid, dictionary and estimates")
    support = np.flatnonzero(omega_hat)
    response = phi[:, support] @ omega_hat[support] if support.size else np.zeros(n)
    return RemTensor(grid=grid, values=np.maximum(shadow_est * response, 0.0))


def mae(truth: RemTensor, estimate: RemTensor) -> float:
    """Mean absolute error between maps on the dB scale."""
    if truth.grid != estimate.grid:
        raise ValueError("maps live on different grids")
    return float(np.mean(np.abs(linear_to_db(estimate.values) - linear_to_db(truth.values))))


class SweepCache:
    """Read-only shared precomputations for repeated runs on one scenario.

    Caches the dictionary, its reductions per ``per_thr`` and greedy traces,
    all of which depend only on the grid and channel, never on the run seed.
    """

    def __init__(self):
        self._phi = None
        self._phi_key = None
        self._dicts: dict[float, sp.Dictionary] = {}
        self._traces: dict[tuple[float, int], tuple] = {}

    def phi(self, config: ExperimentConfig) -> np.ndarray:
        key = (config.grid, config.channel)
        if self._phi_key != key:
            self._phi = ch.build_dictionary(config.grid, config.channel)
            self._phi_key = key
            self._dicts.clear()
            self._traces.clear()
        return self._phi

    def dictionary(self, config: ExperimentConfig) -> sp.Dictionary:
        per_thr = config.sampling.per_thr
        if per_thr not in self._dicts:
            self._dicts[per_thr] = sp.pca_reduce(self.phi(config), per_thr)
        return self._dicts[per_thr]

    def greedy_plan(self, config: ExperimentConfig, m: int) -> sp.MeasurementPlan:
        dictionary = self.dictionary(config)
        per_thr = config.sampling.per_thr
        best = max(
            (k[1] for k in self._traces if k[0] == per_thr and k[1] >= m), default=None
        )
        if best is None:
            trace = sp._greedy_trace(dictionary, m)
            self._traces[(per_thr, m)] = trace
            best = m
        trace = self._traces[(per_thr, best)]
        return sp.plan_from_trace(
            dictionary, trace, lambda_wcev=config.sampling.lambda_wcev, m=m
        )

    def warm(self, config: ExperimentConfig, m: int):
        """Precompute the greedy trace up to ``m`` samples."""
        if config.sampling.method == "snlo":
            self.greedy_plan(config, m)
        else:
            self.dictionary(config)


def _stage(timings: dict, name: str):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = (time.perf_counter() - self.t0) * 1e3
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Timer()


def _stage_seeds(seed: int):
    """Fixed-order per-stage seeds derived from the run seed."""
    shadow, noise, plan, sources = np.random.SeedSequence(seed).spawn(4)
    return shadow, noise, plan, sources


def synthesize_scene(config: ExperimentConfig, seed: int, cache: SweepCache | None = None):
    """Ground truth for one seed: (truth, sources, shadow field, dictionary phi)."""
    cache = cache or SweepCache()
    shadow_seed, _, _, source_seed = _stage_seeds(seed)
    phi = cache.phi(config)
    sources = config.sources.build(config.grid, fallback_seed=source_seed)
    if config.shadow.sigma2 > 0:
        shadow_field = ch.sample_shadow_field(config.grid, config.shadow, shadow_seed)
    else:
        shadow_field = np.ones(config.grid.n_voxels)
    truth = ch.synthesize_truth(config.grid, phi, sources, shadow_field)
    return truth, sources, shadow_field, phi


def sigma0_2_from_snr(truth_values: np.ndarray, snr_db: float) -> float:
    """Noise variance hitting a target SNR at the scene's typical power.

    SNR is the ratio of the squared geometric mean of the map's RSS to the
    noise variance. Powers span several decades, so calibrating against an
    arithmetic mean would let the loudest voxels set a noise floor that
    drowns the quiet majority; the geometric mean tracks the typical voxel.
    Calibrating on the whole map (not the sampled subset) keeps the noise
    level a property of the scene, independent of the plan under test.
    """
    x = np.maximum(np.asarray(truth_values, dtype=float), 1e-300)
    geo_mean = float(np.exp(np.mean(np.log(x))))
    return geo_mean**2 / 10.0 ** (snr_db / 10.0)


def run_once(
    config: ExperimentConfig,
    seed: int,
    *,
    cache: SweepCache | None = None,
    truth: RemTensor | None = None,
) -> RunResult:
    """One full construction run; fully determined by ``(config, seed)``.

    ``truth`` may be supplied (e.g. loaded from a generated file) to skip
    synthesis; it must live on the configured grid.
    """
    cache = cache or SweepCache()
    timings: dict[str, float] = {}
    grid = config.grid
    n = grid.n_voxels
    _, noise_seed, plan_seed, _ = _stage_seeds(seed)

    with _stage(timings, "synthesize"):
        if truth is None:
            truth, _, _, phi = synthesize_scene(config, seed, cache)
        else:
            if truth.grid != grid:
                raise ValueError("supplied truth grid differs from config grid")
            phi = cache.phi(config)

    with _stage(timings, "plan"):
        dictionary = cache.dictionary(config)
        m = config.sampling.sample_count(n)
        if config.sampling.method == "random":
            if m is None:
                raise ValueError("random sampling needs r or m")
            plan = sp.random_plan(n, m, plan_seed)
        elif m is not None:
            plan = cache.greedy_plan(config, m)
        else:
            plan = sp.greedy_select(
                dictionary,
                lambda_wcev=config.sampling.lambda_wcev,
                m_max=config.sampling.m_max,
            )
        h_p = dictionary.phi_p[plan.selected]
        wc_sbl_v = sp.wcev(h_p.T @ h_p)

    with _stage(timings, "measure"):
        if config.sigma0_2 is not None:
            sigma0_2 = config.sigma0_2
        elif config.snr_db is not None:
            sigma0_2 = sigma0_2_from_snr(truth.values, config.snr_db)
        else:
            sigma0_2 = 0.0
        obs = ch.measure(truth, plan, sigma0_2, noise_seed)

    with _stage(timings, "sbl"):
        phi_rows = phi[plan.selected, :]
        state = sbl_recover(phi_rows, obs.t, config.sbl)
        # transmit powers are physical: project the recovered weights onto
        # the nonnegative orthant before they feed the channel model
        omega_hat = np.maximum(state.omega_hat, 0.0)

    shadow_db = np.zeros(n)
    gp_state = None
    if config.gpr.enabled:
        with _stage(timings, "shadow_extract"):
            pred = phi_rows @ omega_hat
            usable = (obs.t > 0) & (pred > 0)
            kept_idx = plan.selected[usable]
            if usable.any():
                xi_s = gp.extract_shadow(obs.t[usable], omega_hat, phi_rows[usable])
                shadow_db[kept_idx] = xi_s
        if usable.sum() >= 2:
            with _stage(timings, "gpr_fit"):
                centers = grid.centers()
                gp_state = gp.fit(
                    centers[kept_idx], xi_s,
                    n_starts=config.gpr.multi_starts, seed=config.gpr.seed,
                )
            with _stage(timings, "gpr_predict"):
                rest = np.setdiff1d(np.arange(n), kept_idx, assume_unique=False)
                prediction = gp.predict(gp_state, centers[rest])
                shadow_db[rest] = prediction.mean

    with _stage(timings, "reconstruct"):
        shadow_est = 10.0 ** (shadow_db / 10.0)
        estimate = reconstruct(grid, phi, omega_hat, shadow_est)

    with _stage(timings, "mae"):
        mae_db = mae(truth, estimate)

    return RunResult(
        seed=seed,
        config_digest=config.digest(),
        truth=truth,
        estimate=estimate,
        omega_hat=omega_hat,
        shadow_est=shadow_est,
        plan=plan,
        observations=obs,
        sbl_state=state,
        gp_state=gp_state,
        mae_db=mae_db,
        wc_sbl_v=wc_sbl_v,
        sigma0_2=sigma0_2,
        timings_ms=timings,
    )


def _config_for(config: ExperimentConfig, variable: str, value):
    if variable == "r":
        return replace(config, sampling=replace(config.sampling, r=float(value), m=None))
    if variable == "snr_db":
        return replace(config, snr_db=float(value), sigma0_2=None)
    if variable == "per_thr":
        return replace(config, sampling=replace(config.sampling, per_thr=float(value)))
    raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")


def sweep(
    config: ExperimentConfig,
    variable: str,
    values,
    seeds,
    *,
    threads: int = 1,
) -> list[dict]:
    """Full factorial over ``values x seeds``; one row per cell.

    Failed cells record their error and the sweep continues. Rows come back
    sorted by ``(value, seed)`` regardless of execution order.
    """
    values = list(values)
    seeds = list(seeds)
    if not values:
        raise ValueError("sweep needs at least one value")
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")

    cache = SweepCache()
    cells = []
    for value in values:
        cfg_v = _config_for(config, variable, value)
        m = cfg_v.sampling.sample_count(cfg_v.grid.n_voxels)
        if m is not None:
            cache.warm(cfg_v, m)
        for seed in seeds:
            cells.append((value, seed, cfg_v))

    def run_cell(cell):
        value, seed, cfg_v = cell
        t0 = time.perf_counter()
        row = {
            "variable": variable, "value": value, "seed": seed,
            "mae_db": float("nan"), "wc_sbl_v": float("nan"),
            "m_samples": 0, "wall_ms": 0.0, "converged": False, "error": None,
        }
        try:
            result = run_once(cfg_v, seed, cache=cache)
            row.update(
                mae_db=result.mae_db,
                wc_sbl_v=result.wc_sbl_v,
                m_samples=result.plan.m_samples,
                converged=result.sbl_state.converged,
            )
        except Exception as exc:  # cell isolation: record, keep sweeping
            row["error"] = str(exc)
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(cell) for cell in cells]
    rows.sort(key=lambda row: (row["value"], row["seed"]))
    return rows


def write_sweep_csv(rows, path):
    """Write sweep rows with the stable column set (errors go to the manifest)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_CSV_COLUMNS)
        for row in rows:
            writer.writerow([
                row["variable"], row["value"], row["seed"],
                f"{row['mae_db']:.9g}", f"{row['wc_sbl_v']:.9g}",
                row["m_samples"], f"{row['wall_ms']:.3f}",
                str(bool(row["converged"])).lower(),
            ])
