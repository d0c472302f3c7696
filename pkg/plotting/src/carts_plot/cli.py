"""carts-plot: render experiment CSVs into figures."""

from __future__ import annotations

import argparse
import sys

from carts_plot.io import SchemaError
from carts_plot.render import KINDS, PlotSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="carts-plot")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_path", required=True)
    parser.add_argument("--out", dest="output_path", required=True)
    parser.add_argument("--column", default="nmse",
                        help="metric column for cdf plots")
    parser.add_argument("--round", dest="round_index", type=int, default=None,
                        help="restrict trajectory plots to one round")
    parser.add_argument("--title", default="")
    args = parser.parse_args(argv)
    spec = PlotSpec(
        kind=args.kind,
        input_path=args.input_path,
        output_path=args.output_path,
        column=args.column,
        round_index=args.round_index,
        title=args.title,
    )
    try:
        path = render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
