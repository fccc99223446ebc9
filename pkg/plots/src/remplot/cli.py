"""Standalone figure command for remforge artifacts."""

from __future__ import annotations

import argparse
import sys

from remplot import __version__
from remplot.figures import FigureSpec, plot_curves, plot_heatmap


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="remplot")
    sub = parser.add_subparsers(dest="command", required=True)

    p_heat = sub.add_parser("heatmap", help="side-by-side truth/estimate slice")
    p_heat.add_argument("--truth", required=True)
    p_heat.add_argument("--estimate", required=True)
    p_heat.add_argument("--z", type=int, default=0, help="altitude slice index")
    p_heat.add_argument("--out", required=True, help="output PNG")
    p_heat.add_argument("--vmin", type=float, default=None, help="color floor dBm")
    p_heat.add_argument("--vmax", type=float, default=None, help="color ceiling dBm")

    p_curve = sub.add_parser("curves", help="median plus interquartile sweep curve")
    p_curve.add_argument("--sweep", required=True)
    p_curve.add_argument("--x", default="value")
    p_curve.add_argument("--y", default="mae_db")
    p_curve.add_argument("--out", required=True, help="output PNG")

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "version":
            print(__version__)
        elif args.command == "heatmap":
            spec = FigureSpec(
                inputs=(args.truth, args.estimate), kind="heatmap",
                output=args.out, z_index=args.z, vmin=args.vmin, vmax=args.vmax,
            )
            info = plot_heatmap(
                args.truth, args.estimate, spec.z_index, spec.output,
                vmin=spec.vmin, vmax=spec.vmax,
            )
            print(f"wrote {info['output']} (panels {info['panel_shape']})")
        else:
            spec = FigureSpec(inputs=(args.sweep,), kind="curve", output=args.out)
            info = plot_curves(args.sweep, args.x, args.y, spec.output)
            print(f"wrote {info['output']} ({len(info['levels'])} levels)")
        return 0
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
