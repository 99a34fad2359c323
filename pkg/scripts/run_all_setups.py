#!/usr/bin/env python3
"""Run all four desk-scale experiments and print the report table.

Desk-scale tolerances are 100x the full-scale ones; each run takes seconds
to a few minutes.  Pass --full to use the full-scale tolerances instead
(hours, mirrors the published experiments).
"""

import argparse
import sys

from goafem_ml.adaptive import DESK_TOL, PAPER_TOL
from goafem_ml.cli import main as goafem_main


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--output-dir", default="runs")
    parser.add_argument("--full", action="store_true",
                        help="use the full-scale tolerances")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--dump-mesh", action="store_true")
    args = parser.parse_args()

    tols = PAPER_TOL if args.full else DESK_TOL
    for setup in (1, 2, 3, 4):
        argv = ["run", "--setup", str(setup), "--theta", "0.5",
                "--tol", str(tols[setup]), "--output-dir", args.output_dir,
                "--threads", str(args.threads),
                "--max-iter", "40" if args.full else "25"]
        if args.dump_mesh:
            argv.append("--dump-mesh")
        rc = goafem_main(argv)
        if rc != 0:
            return rc
    return goafem_main(["report", "--output-dir", args.output_dir])


if __name__ == "__main__":
    sys.exit(main())
