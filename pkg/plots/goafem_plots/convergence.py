"""Parse goafem convergence CSVs and render log-log convergence figures.

Consumes only the CSV format written by the solver CLI ("# goafem-ml v1",
columns iter,dofs,mu,zeta,product,goal_value,n_indices,max_param,seconds and
an optional ref_error column).  The annotated slope uses the same definition
as the solver's ``report`` subcommand: least squares on the last five
(log N, log product) points via numpy.polyfit.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class SeriesError(Exception):
    """Malformed or inconsistent convergence CSV."""


@dataclass
class RunSeries:
    label: str
    dofs: np.ndarray
    product: np.ndarray
    ref_error: np.ndarray = None    # present only for reference CSVs

    def __post_init__(self):
        if np.any(np.diff(self.dofs) <= 0):
            raise SeriesError(f"{self.label}: dofs must be strictly increasing")
        if np.any(self.product <= 0.0):
            raise SeriesError(f"{self.label}: estimate products must be positive")


def read_series(path) -> RunSeries:
    rows = []
    with open(path) as f:
        lineno = 1
        first = f.readline()
        if not first.startswith("#"):
            f.seek(0)
            lineno = 0
        reader = csv.DictReader(f)
        for row in reader:
            lineno += 1
            try:
                rows.append((float(row["dofs"]), float(row["product"]),
                             float(row["ref_error"])
                             if "ref_error" in row and row["ref_error"] != ""
                             else None))
            except (TypeError, KeyError, ValueError) as exc:
                raise SeriesError(
                    f"{path}: line {lineno + 1}: {exc}") from exc
    if not rows:
        raise SeriesError(f"{path}: no data rows")
    dofs = np.array([r[0] for r in rows])
    product = np.array([r[1] for r in rows])
    ref = None
    if rows[0][2] is not None:
        ref = np.array([r[2] for r in rows])
    return RunSeries(os.path.basename(path), dofs, product, ref)


def fitted_slope(dofs, products, points: int = 5) -> float:
    dofs = np.asarray(dofs, dtype=float)[-points:]
    products = np.asarray(products, dtype=float)[-points:]
    if len(dofs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(dofs), np.log(products), 1)[0])


def plot_convergence(csv_paths, output_path) -> float:
    """Log-log figure of estimate products (red) and reference errors (blue).

    A dashed N^-1 guide line is anchored at the last product point of the
    first series.  Returns the annotated slope of that series.
    """
    if not csv_paths:
        raise SeriesError("no runs found")
    series = [read_series(p) for p in csv_paths]

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for s in series:
        ax.loglog(s.dofs, s.product, "o-", color="tab:red",
                  label=rf"estimate product ({s.label})")
        if s.ref_error is not None:
            mask = s.ref_error > 0
            ax.loglog(s.dofs[mask], s.ref_error[mask], "o-", color="tab:blue",
                      label=rf"reference error ({s.label})")

    anchor = series[0]
    slope = fitted_slope(anchor.dofs, anchor.product)
    n_lo, n_hi = anchor.dofs[0], anchor.dofs[-1]
    c = anchor.product[-1] * anchor.dofs[-1]
    guide = np.array([n_lo, n_hi])
    ax.loglog(guide, c / guide, "k--", label=r"$O(N^{-1})$ guide")
    ax.annotate(f"slope {slope:.3f}", xy=(anchor.dofs[-1], anchor.product[-1]),
                xytext=(-70, 10), textcoords="offset points")

    ax.set_xlabel("number of DOFs")
    ax.set_ylabel("goal-error estimate")
    ax.grid(True, which="both", linestyle=":", linewidth=0.5)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(output_path, dpi=150)
    plt.close(fig)
    return slope
