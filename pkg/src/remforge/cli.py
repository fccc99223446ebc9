"""Command-line entry point.

Subcommands: generate (synthesize a truth map), plan (measurement design),
recover (full end-to-end run), sweep (factorial experiment), version.
Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from remforge import __version__
from remforge import pipeline
from remforge.config import ConfigError, ExperimentConfig, load_config
from remforge.gridio import read_rem_csv, write_rem_csv
from remforge.sampling import greedy_select, random_plan

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="experiment config (YAML)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="KEY=VALUE", help="override a config entry, e.g. sampling.r=0.1",
    )
    parser.add_argument("--seed", type=int, default=0, help="run seed")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="remforge")
    parser.add_argument(
        "--threads", type=int, default=None,
        help="worker cap for sweeps (default: env REM_FORGE_THREADS or 1)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="synthesize a ground-truth map")
    _add_common(p_gen)

    p_plan = sub.add_parser("plan", help="compute a measurement plan")
    _add_common(p_plan)

    p_rec = sub.add_parser("recover", help="run the full construction pipeline")
    _add_common(p_rec)
    p_rec.add_argument("--truth", default=None, help="use this truth CSV instead of synthesizing")

    p_sweep = sub.add_parser("sweep", help="factorial experiment over one variable")
    _add_common(p_sweep)
    p_sweep.add_argument("--variable", required=True, choices=pipeline.SWEEP_VARIABLES)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", default="0", help="comma list or start..stop range")

    sub.add_parser("version", help="print the library version")
    return parser


def _outdir(args, config: ExperimentConfig) -> Path:
    out = Path(args.out if args.out is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _parse_seeds(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        start, stop = text.split("..", 1)
        return list(range(int(start), int(stop) + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def cmd_generate(args) -> int:
    config = load_config(args.config, args.overrides)
    out = _outdir(args, config)
    truth, sources, _, _ = pipeline.synthesize_scene(config, args.seed)
    truth_path = out / "truth.csv"
    write_rem_csv(truth, truth_path)
    _write_json(out / "generate.json", {
        "config_digest": config.digest(),
        "seed": args.seed,
        "n_voxels": config.grid.n_voxels,
        "k_sources": sources.k_sources,
        "source_indices": sources.support.tolist(),
        "library_version": __version__,
        "truth_csv": str(truth_path),
    })
    print(f"wrote {truth_path}")
    return EXIT_OK


def cmd_plan(args) -> int:
    config = load_config(args.config, args.overrides)
    out = _outdir(args, config)
    cache = pipeline.SweepCache()
    n = config.grid.n_voxels
    m = config.sampling.sample_count(n)
    if config.sampling.method == "random":
        plan = random_plan(n, m, config.sampling.seed)
    elif m is not None:
        plan = cache.greedy_plan(config, m)
    else:
        plan = greedy_select(
            cache.dictionary(config),
            lambda_wcev=config.sampling.lambda_wcev,
            m_max=config.sampling.m_max,
        )
    plan_path = out / "plan.json"
    _write_json(plan_path, plan.to_dict())
    print(f"wrote {plan_path} (M={plan.m_samples}, satisfied={plan.satisfied})")
    return EXIT_OK


def cmd_recover(args) -> int:
    config = load_config(args.config, args.overrides)
    out = _outdir(args, config)
    truth = None
    if args.truth is not None:
        truth = read_rem_csv(args.truth, config.grid)
    result = pipeline.run_once(config, args.seed, truth=truth)
    truth_path = out / "truth.csv"
    estimate_path = out / "estimate.csv"
    write_rem_csv(result.truth, truth_path)
    write_rem_csv(result.estimate, estimate_path)
    manifest = result.to_manifest()
    manifest.update({
        "library_version": __version__,
        "truth_csv": str(truth_path),
        "estimate_csv": str(estimate_path),
        "timings_ms": {k: round(v, 3) for k, v in result.timings_ms.items()},
    })
    _write_json(out / "run.json", manifest)
    print(f"mae_db={result.mae_db:.6g} m_samples={result.plan.m_samples} -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args.config, args.overrides)
    out = _outdir(args, config)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    seeds = _parse_seeds(args.seeds)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("REM_FORGE_THREADS", "1"))
    rows = pipeline.sweep(config, args.variable, values, seeds, threads=max(threads, 1))
    csv_path = out / "sweep.csv"
    pipeline.write_sweep_csv(rows, csv_path)
    errors = [
        {"value": row["value"], "seed": row["seed"], "error": row["error"]}
        for row in rows if row["error"]
    ]
    _write_json(out / "sweep.json", {
        "config_digest": config.digest(),
        "variable": args.variable,
        "values": values,
        "seeds": seeds,
        "library_version": __version__,
        "csv": str(csv_path),
        "n_cells": len(rows),
        "errors": errors,
    })
    print(f"wrote {csv_path} ({len(rows)} cells, {len(errors)} failed)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        handler = {
            "generate": cmd_generate,
            "plan": cmd_plan,
            "recover": cmd_recover,
            "sweep": cmd_sweep,
        }[args.command]
        return handler(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # no panics: every failure maps to an exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
