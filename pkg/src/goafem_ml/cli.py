"""Command-line entry point.

Subcommands:

* ``run``        adaptive run for one setup, writes setup<k>_convergence.csv
* ``reference``  run to the reference tolerance and emit the base-run CSV
                 with an extra ref_error column (setup<k>_reference.csv)
* ``report``     summarize convergence CSVs: final estimates and the fitted
                 log-log slope over the last five points

Configuration comes from flags or a flat key=value config file (flags win).
Runs are fully deterministic; re-running a config reproduces all numeric
columns except the wall-time column.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .adaptive import (PAPER_REF_TOL, RunConfig, fitted_slope,
                       reference_errors, run_setup)
from .solver import NonconvergenceError

CONFIG_KEYS = ("setup", "theta", "tol", "ref_tol", "max_iter", "solver_tol",
               "output_dir", "threads")


def _read_config_file(path):
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = val
    return out


def _build_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(_read_config_file(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "setup" not in values:
        raise ValueError("a setup (1-4) is required")
    casts = {"setup": int, "theta": float, "tol": float, "ref_tol": float,
             "max_iter": int, "solver_tol": float, "output_dir": str,
             "threads": int}
    kwargs = {k: casts[k](v) for k, v in values.items()}
    return RunConfig(**kwargs)


def _add_run_flags(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--setup", type=int, choices=(1, 2, 3, 4))
    parser.add_argument("--theta", type=float)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--ref-tol", dest="ref_tol", type=float)
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--solver-tol", dest="solver_tol", type=float)
    parser.add_argument("--output-dir", dest="output_dir", default=None)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--dump-mesh", action="store_true",
                        help="write the final zero-index mesh as a text dump")
    parser.add_argument("--dump-indicators", action="store_true",
                        help="write the top-20 indicators per iteration")


def _cmd_run(args) -> int:
    config = _build_config(args)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir,
                        f"setup{config.setup}_convergence.csv")
    try:
        log, final = run_setup(config, keep_states=args.dump_indicators)
    except NonconvergenceError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 1
    log.write_csv(path)

    if args.dump_indicators:
        from .estimator import dump_top_indicators
        ind_path = os.path.join(config.output_dir,
                                f"setup{config.setup}_indicators.txt")
        with open(ind_path, "w") as f:
            for state in final:
                f.write(f"# iteration {state.iteration}\n")
                f.write("# primal\n")
                dump_top_indicators(state.mu_bundle, f)
                f.write("# dual\n")
                dump_top_indicators(state.zeta_bundle, f)
        print(f"wrote {ind_path}")
        final = final[-1]
    if args.dump_mesh:
        from .mesh import write_dump
        from .param import MultiIndex
        mesh_path = os.path.join(config.output_dir,
                                 f"setup{config.setup}_mesh_zero.txt")
        write_dump(final.structure.mesh(MultiIndex.zero()), mesh_path)
        print(f"wrote {mesh_path}")

    last = log.rows[-1]
    flag = "reached tol" if log.reached_tol else "hit iteration cap"
    print(f"setup {config.setup}: {len(log.rows)} iterations, "
          f"{last.dofs} dofs, estimate product {last.product:.3e} ({flag})")
    print(f"index set: {final.structure.index_set!r}")
    print(f"wrote {path}")
    return 0


def _cmd_reference(args) -> int:
    config = _build_config(args)
    ref_tol = config.ref_tol
    if ref_tol is None:
        ref_tol = min(config.tol / 10.0, PAPER_REF_TOL[config.setup] * 100.0)
    os.makedirs(config.output_dir, exist_ok=True)
    ref_config = RunConfig(config.setup, config.theta, ref_tol, None,
                           config.max_iter, config.solver_tol,
                           config.output_dir, config.threads)
    try:
        ref_log, _ = run_setup(ref_config)
    except NonconvergenceError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 1
    base, errors = reference_errors(ref_log, config.tol)
    base.ref_errors = errors
    path = os.path.join(config.output_dir,
                        f"setup{config.setup}_reference.csv")
    base.write_csv(path)
    print(f"setup {config.setup}: reference at tol {ref_tol:.2e} "
          f"({ref_log.rows[-1].dofs} dofs), {len(base.rows)} base rows")
    print(f"wrote {path}")
    return 0


def read_csv(path):
    """Parse a convergence CSV into a dict of numpy column arrays."""
    with open(path) as f:
        first = f.readline()
        if not first.startswith("#"):
            f.seek(0)
        reader = csv.DictReader(f)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    out = {}
    for name in rows[0]:
        out[name] = np.array([float(r[name]) for r in rows])
    return out


def _cmd_report(args) -> int:
    paths = args.csv
    if not paths:
        base = args.output_dir or "."
        paths = sorted(
            os.path.join(base, f) for f in os.listdir(base)
            if f.endswith("_convergence.csv") or f.endswith("_reference.csv"))
    if not paths:
        print("no convergence CSVs found", file=sys.stderr)
        return 2
    print(f"{'file':<40} {'dofs':>9} {'mu':>11} {'zeta':>11} "
          f"{'product':>11} {'slope':>8}")
    for path in paths:
        data = read_csv(path)
        slope = fitted_slope(data["dofs"], data["product"])
        print(f"{os.path.basename(path):<40} {int(data['dofs'][-1]):>9} "
              f"{data['mu'][-1]:>11.3e} {data['zeta'][-1]:>11.3e} "
              f"{data['product'][-1]:>11.3e} {slope:>8.3f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="goafem",
        description="goal-oriented adaptive multilevel stochastic Galerkin FEM")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the adaptive loop for one setup")
    _add_run_flags(p_run)
    p_ref = sub.add_parser("reference",
                           help="run to the reference tolerance and emit "
                                "reference errors")
    _add_run_flags(p_ref)
    p_rep = sub.add_parser("report", help="summarize convergence CSVs")
    p_rep.add_argument("csv", nargs="*", help="CSV files (default: scan dir)")
    p_rep.add_argument("--output-dir", dest="output_dir", default=".")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "reference":
            return _cmd_reference(args)
        return _cmd_report(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
