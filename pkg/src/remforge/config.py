"""Experiment configuration: schema, validation, file loading, overrides.

The config file is YAML with one section per subsystem. Unknown keys are
rejected; numeric ranges are enforced by the owning domain types. Power
fields are dBm in the file and converted to linear mW at parse time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from remforge.channel import ChannelParams, ShadowModel, SourceField
from remforge.grid import GridSpec
from remforge.sbl import SBLConfig


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class SourcesSpec:
    """Transmitters: either an explicit list or a seeded random draw."""

    count: int | None = None
    power_mw: float | None = None
    seed: int | None = None
    explicit: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self):
        if (self.explicit is None) == (self.count is None):
            raise ConfigError("sources need either count+power_dbm+seed or an explicit list")
        if self.explicit is None:
            if self.count is None or self.count < 1:
                raise ConfigError("source count must be at least 1")
            if self.power_mw is None or not self.power_mw > 0:
                raise ConfigError("source power must be positive")
        elif not self.explicit:
            raise ConfigError("explicit source list is empty")

    def build(self, grid: GridSpec, fallback_seed=None) -> SourceField:
        """Materialize the transmitters; a config without its own seed places
        them from ``fallback_seed`` (the run seed), varying per run."""
        if self.explicit is not None:
            indices = [idx for idx, _ in self.explicit]
            powers = [p for _, p in self.explicit]
            return SourceField.from_indices(grid, indices, powers)
        seed = self.seed if self.seed is not None else fallback_seed
        if seed is None:
            raise ConfigError("random sources need a seed")
        return SourceField.random(grid, self.count, self.power_mw, seed)


@dataclass(frozen=True)
class SamplingSpec:
    """Plan construction: method, reduction level, size or stop floor."""

    method: str = "snlo"
    per_thr: float = 0.9
    r: float | None = None
    m: int | None = None
    lambda_wcev: float | None = None
    m_max: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("snlo", "random"):
            raise ConfigError(f"sampling method must be snlo or random, got {self.method!r}")
        if not 0.0 < self.per_thr <= 1.0:
            raise ConfigError("per_thr must be in (0, 1]")
        given = [v is not None for v in (self.r, self.m, self.lambda_wcev)]
        if not any(given):
            raise ConfigError("sampling needs one of r, m or lambda_wcev")
        if self.r is not None and self.m is not None:
            raise ConfigError("give either r or m, not both")
        if self.r is not None and not 0.0 < self.r <= 1.0:
            raise ConfigError("sampling rate r must be in (0, 1]")
        if self.m is not None and self.m < 1:
            raise ConfigError("sample count m must be at least 1")
        if self.lambda_wcev is not None and not self.lambda_wcev > 0:
            raise ConfigError("lambda_wcev must be positive")
        if self.method == "random" and self.r is None and self.m is None:
            raise ConfigError("random sampling needs r or m")

    def sample_count(self, n_voxels: int) -> int | None:
        """Requested sample count, or None when only the stop floor is given."""
        if self.m is not None:
            return min(self.m, n_voxels)
        if self.r is not None:
            return max(1, min(int(round(self.r * n_voxels)), n_voxels))
        return None


@dataclass(frozen=True)
class GprSpec:
    enabled: bool = True
    multi_starts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.multi_starts < 1:
            raise ConfigError("gpr multi_starts must be at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec
    channel: ChannelParams
    shadow: ShadowModel
    sources: SourcesSpec
    sampling: SamplingSpec
    sbl: SBLConfig = field(default_factory=SBLConfig)
    gpr: GprSpec = field(default_factory=GprSpec)
    snr_db: float | None = None
    sigma0_2: float | None = None
    output_dir: str = "out"

    def __post_init__(self):
        if self.snr_db is not None and self.sigma0_2 is not None:
            raise ConfigError("give either snr_db or sigma0_2, not both")
        if self.sigma0_2 is not None and self.sigma0_2 < 0:
            raise ConfigError("sigma0_2 must be nonnegative")

    def to_dict(self) -> dict:
        g, ch, sh = self.grid, self.channel, self.shadow
        sources: dict = {}
        if self.sources.explicit is not None:
            sources["explicit"] = [
                {"index": idx, "power_dbm": 10.0 * np.log10(p)} for idx, p in self.sources.explicit
            ]
        else:
            sources = {
                "count": self.sources.count,
                "power_dbm": 10.0 * np.log10(self.sources.power_mw),
                "seed": self.sources.seed,
            }
        channel = {
            "gt": ch.gt,
            "gr": ch.gr,
            "fc_hz": ch.fc,
            "c_light": ch.c_light,
            "eta": ch.eta,
            "d_ref_m": ch.d_ref,
        }
        if self.snr_db is not None:
            channel["snr_db"] = self.snr_db
        if self.sigma0_2 is not None:
            channel["sigma0_2"] = self.sigma0_2
        sampling = {"method": self.sampling.method, "per_thr": self.sampling.per_thr}
        for name in ("r", "m", "lambda_wcev", "m_max"):
            value = getattr(self.sampling, name)
            if value is not None:
                sampling[name] = value
        if self.sampling.method == "random":
            sampling["seed"] = self.sampling.seed
        return {
            "grid": {
                "nx": g.nx, "ny": g.ny, "nz": g.nz,
                "dx": g.dx, "dy": g.dy, "dz": g.dz,
                "origin": list(g.origin),
            },
            "channel": channel,
            "shadow": {"sigma_db": float(np.sqrt(sh.sigma2)), "rho_m": sh.rho},
            "sources": sources,
            "sampling": sampling,
            "sbl": {
                "a_gam": self.sbl.a_gam, "b_gam": self.sbl.b_gam,
                "c_gam": self.sbl.c_gam, "d_gam": self.sbl.d_gam,
                "thre_alpha": self.sbl.thre_alpha,
                "iter_max": self.sbl.iter_max, "tol": self.sbl.tol,
            },
            "gpr": {
                "enabled": self.gpr.enabled,
                "multi_starts": self.gpr.multi_starts,
                "seed": self.gpr.seed,
            },
            "output": {"dir": self.output_dir},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _take(section: dict, name: str, keys: dict):
    """Pop known keys with defaults; reject anything left over."""
    unknown = set(section) - set(keys)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {sorted(unknown)}")
    out = {}
    for key, default in keys.items():
        out[key] = section.get(key, default)
    return out


_REQUIRED = object()


def _require(values: dict, name: str):
    for key, val in values.items():
        if val is _REQUIRED:
            raise ConfigError(f"missing required key {key!r} in {name}")


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(doc) - {"grid", "channel", "shadow", "sources", "sampling", "sbl", "gpr", "output"}
    if unknown:
        raise ConfigError(f"unknown top-level section(s): {sorted(unknown)}")
    for section in ("grid", "channel", "shadow", "sources", "sampling"):
        if section not in doc:
            raise ConfigError(f"missing required section {section!r}")

    try:
        g = _take(doc["grid"], "grid", {
            "nx": _REQUIRED, "ny": _REQUIRED, "nz": _REQUIRED,
            "dx": _REQUIRED, "dy": _REQUIRED, "dz": _REQUIRED,
            "origin": [0.0, 0.0, 0.0],
        })
        _require(g, "grid")
        grid = GridSpec(
            nx=int(g["nx"]), ny=int(g["ny"]), nz=int(g["nz"]),
            dx=float(g["dx"]), dy=float(g["dy"]), dz=float(g["dz"]),
            origin=tuple(g["origin"]),
        )

        ch = _take(doc["channel"], "channel", {
            "gt": 1.0, "gr": 1.0, "fc_hz": _REQUIRED, "c_light": 3.0e8,
            "eta": _REQUIRED, "d_ref_m": _REQUIRED,
            "snr_db": None, "sigma0_2": None,
        })
        _require(ch, "channel")
        channel = ChannelParams(
            gt=float(ch["gt"]), gr=float(ch["gr"]), fc=float(ch["fc_hz"]),
            c_light=float(ch["c_light"]), eta=float(ch["eta"]), d_ref=float(ch["d_ref_m"]),
        )

        sh = _take(doc["shadow"], "shadow", {"sigma_db": _REQUIRED, "rho_m": _REQUIRED})
        _require(sh, "shadow")
        if float(sh["sigma_db"]) < 0:
            raise ConfigError("sigma_db must be nonnegative")
        shadow = ShadowModel(sigma2=float(sh["sigma_db"]) ** 2, rho=float(sh["rho_m"]))

        src = doc["sources"]
        if "explicit" in src:
            src_kw = _take(src, "sources", {"explicit": _REQUIRED})
            entries = []
            for item in src_kw["explicit"]:
                e = _take(item, "sources.explicit[]", {"cell": None, "index": None,
                                                       "power_dbm": _REQUIRED})
                _require(e, "sources.explicit[]")
                if (e["cell"] is None) == (e["index"] is None):
                    raise ConfigError("each explicit source needs cell or index (not both)")
                if e["cell"] is not None:
                    ix, iy, iz = (int(v) for v in e["cell"])
                    idx = grid.linear_index(ix, iy, iz)
                else:
                    idx = int(e["index"])
                entries.append((idx, float(10.0 ** (float(e["power_dbm"]) / 10.0))))
            sources = SourcesSpec(explicit=tuple(entries))
        else:
            src_kw = _take(src, "sources", {"count": _REQUIRED, "power_dbm": _REQUIRED,
                                            "seed": None})
            _require(src_kw, "sources")
            sources = SourcesSpec(
                count=int(src_kw["count"]),
                power_mw=float(10.0 ** (float(src_kw["power_dbm"]) / 10.0)),
                seed=None if src_kw["seed"] is None else int(src_kw["seed"]),
            )

        sp = _take(doc["sampling"], "sampling", {
            "method": "snlo", "per_thr": 0.9, "r": None, "m": None,
            "lambda_wcev": None, "m_max": None, "seed": 0,
        })
        sampling = SamplingSpec(
            method=str(sp["method"]), per_thr=float(sp["per_thr"]),
            r=None if sp["r"] is None else float(sp["r"]),
            m=None if sp["m"] is None else int(sp["m"]),
            lambda_wcev=None if sp["lambda_wcev"] is None else float(sp["lambda_wcev"]),
            m_max=None if sp["m_max"] is None else int(sp["m_max"]),
            seed=int(sp["seed"]),
        )

        sb = _take(doc.get("sbl", {}), "sbl", {
            "a_gam": 1e-6, "b_gam": 1e-6, "c_gam": 0.0, "d_gam": 0.0,
            "thre_alpha": 1e10, "iter_max": 1000, "tol": 1e-4,
        })
        sbl = SBLConfig(
            a_gam=float(sb["a_gam"]), b_gam=float(sb["b_gam"]),
            c_gam=float(sb["c_gam"]), d_gam=float(sb["d_gam"]),
            thre_alpha=float(sb["thre_alpha"]),
            iter_max=int(sb["iter_max"]), tol=float(sb["tol"]),
        )

        gp = _take(doc.get("gpr", {}), "gpr", {"enabled": True, "multi_starts": 5, "seed": 0})
        gpr = GprSpec(enabled=bool(gp["enabled"]), multi_starts=int(gp["multi_starts"]),
                      seed=int(gp["seed"]))

        out = _take(doc.get("output", {}), "output", {"dir": "out"})

        return ExperimentConfig(
            grid=grid, channel=channel, shadow=shadow, sources=sources,
            sampling=sampling, sbl=sbl, gpr=gpr,
            snr_db=None if ch["snr_db"] is None else float(ch["snr_db"]),
            sigma0_2=None if ch["sigma0_2"] is None else float(ch["sigma0_2"]),
            output_dir=str(out["dir"]),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``--set section.key=value`` pairs onto the raw config mapping."""
    doc = json.loads(json.dumps(doc))  # deep copy, plain types
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        path, raw = item.split("=", 1)
        keys = path.split(".")
        node = doc
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through non-mapping at {key!r}")
        node[keys[-1]] = yaml.safe_load(raw)
    return doc


def load_config(path, overrides=None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    doc = yaml.safe_load(text)
    return parse_config(apply_overrides(doc, overrides))


def default_config_dict() -> dict:
    """Desk-scale default scenario, ready to dump as a starter config.

    Sources carry no seed of their own, so placements vary with the run
    seed. The pruning threshold is scaled to the 100 mW transmit powers
    (weights below 1 mW prior scale are discarded).
    """
    return {
        "grid": {"nx": 16, "ny": 16, "nz": 4, "dx": 5.0, "dy": 5.0, "dz": 10.0},
        "channel": {"fc_hz": 2.45e9, "eta": 2.0, "d_ref_m": 10.0, "snr_db": 20.0},
        "shadow": {"sigma_db": 4.0, "rho_m": 25.0},
        "sources": {"count": 3, "power_dbm": 20.0},
        "sampling": {"method": "snlo", "per_thr": 0.9, "r": 0.05},
        "sbl": {"a_gam": 1e-6, "b_gam": 1e-6, "thre_alpha": 1.0},
        "gpr": {},
        "output": {"dir": "out"},
    }


def default_config() -> ExperimentConfig:
    return parse_config(default_config_dict())


def config_with(config: ExperimentConfig, **updates) -> ExperimentConfig:
    """Functional update helper used by sweeps."""
    return replace(config, **updates)
