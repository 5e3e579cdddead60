"""Command line: one results CSV in, one figure out."""

from __future__ import annotations

import argparse
import sys

from plotviz.render import KINDS, PlotSpec, SchemaError, SelectionError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render a results CSV into a figure"
    )
    parser.add_argument("--csv", required=True, help="results CSV path")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path (.png/.svg/.pdf)")
    parser.add_argument("--strategies", default="", help="comma-separated strategy filter")
    parser.add_argument(
        "--dof-refs", default="",
        help="comma-separated reference slopes drawn as dashed lines (esr_snr only)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    try:
        slopes = tuple(float(x) for x in args.dof_refs.split(",") if x.strip())
    except ValueError:
        print("error: --dof-refs must be comma-separated numbers", file=sys.stderr)
        return 1
    spec = PlotSpec(
        csv_path=args.csv, kind=args.kind, out_path=args.out,
        strategies=strategies, reference_slopes=slopes,
    )
    try:
        info = render(spec)
    except (OSError, SchemaError, SelectionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info.out_path} ({info.kind}, {len(info.strategies)} strategies)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
