#!/usr/bin/env python3
"""Render convergence figures and mesh wireframes from a run directory.

Requires the companion plotting package (plots/): it consumes only the CSV
and mesh-dump files, so run `run_all_setups.py --dump-mesh` first.
"""

import argparse
import glob
import os
import sys


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--run-dir", default="runs")
    parser.add_argument("--fig-dir", default="figures")
    args = parser.parse_args()

    try:
        from goafem_plots.cli import main as plots_main
    except ImportError:
        print("goafem-plots is not installed; run "
              "`pip install -e plots/ --no-build-isolation`", file=sys.stderr)
        return 2

    os.makedirs(args.fig_dir, exist_ok=True)
    rc = 0
    for csv in sorted(glob.glob(os.path.join(args.run_dir, "setup*_convergence.csv"))):
        name = os.path.basename(csv).replace("_convergence.csv", "")
        paths = [csv]
        ref = csv.replace("_convergence.csv", "_reference.csv")
        if os.path.exists(ref):
            paths.append(ref)
        rc |= plots_main(["convergence", *paths,
                          "-o", os.path.join(args.fig_dir, f"{name}.png")])
    for dump in sorted(glob.glob(os.path.join(args.run_dir, "setup*_mesh_zero.txt"))):
        name = os.path.basename(dump).replace(".txt", "")
        rc |= plots_main(["mesh", dump,
                          "-o", os.path.join(args.fig_dir, f"{name}.png")])
    return rc


if __name__ == "__main__":
    sys.exit(main())
