"""Command-line figure rendering from solver CSV artifacts."""

import argparse
import sys

from .csvio import PlotDataError
from .plots import KINDS, PlotSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotviz", description="Render solver CSV artifacts as figures."
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--csv", required=True, help="input artifact CSV")
    parser.add_argument("--out", required=True, help="output image (png/svg)")
    parser.add_argument("--overlay", help="scatterer cloud CSV for heatmaps")
    parser.add_argument("--maps", type=int, help="pieces per subdivision (M)")
    parser.add_argument("--rho", type=float, help="contraction ratio")
    parser.add_argument("--title", help="figure title")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = PlotSpec(
            kind=args.kind,
            csv_path=args.csv,
            output_path=args.out,
            overlay_csv=args.overlay,
            n_maps=args.maps,
            rho=args.rho,
            title=args.title,
            dpi=args.dpi,
        )
        result = render(spec)
    except PlotDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    line = f"wrote {result.path}"
    if result.annotation:
        line += f" ({result.annotation})"
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
