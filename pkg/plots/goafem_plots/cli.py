"""Plotting CLI for goafem run outputs.

Subcommands:

* ``convergence <csv ...> -o figure.png``  log-log estimate/error curves
* ``mesh <dump> -o figure.png``            triangle wireframe
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

from .convergence import SeriesError, plot_convergence
from .meshview import DumpError, plot_mesh


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="goafem-plots")
    sub = parser.add_subparsers(dest="command", required=True)

    p_conv = sub.add_parser("convergence")
    p_conv.add_argument("csv", nargs="*", help="convergence CSV files")
    p_conv.add_argument("--run-dir", help="scan a directory for *_convergence"
                                          ".csv and *_reference.csv files")
    p_conv.add_argument("-o", "--output", default="convergence.png")

    p_mesh = sub.add_parser("mesh")
    p_mesh.add_argument("dump", help="mesh dump file")
    p_mesh.add_argument("-o", "--output", default="mesh.png")

    args = parser.parse_args(argv)
    try:
        if args.command == "convergence":
            paths = list(args.csv)
            if args.run_dir:
                paths += sorted(glob.glob(os.path.join(args.run_dir, "*_convergence.csv")))
                paths += sorted(glob.glob(os.path.join(args.run_dir, "*_reference.csv")))
            slope = plot_convergence(paths, args.output)
            print(f"wrote {args.output} (fitted slope {slope:.3f})")
        else:
            plot_mesh(args.dump, args.output)
            print(f"wrote {args.output}")
        return 0
    except (SeriesError, DumpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
