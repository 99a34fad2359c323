"""Plotting companion for goafem-ml convergence CSVs and mesh dumps."""

from .convergence import RunSeries, SeriesError, fitted_slope, plot_convergence
from .meshview import DumpError, plot_mesh, read_dump

__all__ = ["RunSeries", "SeriesError", "DumpError", "fitted_slope",
           "plot_convergence", "plot_mesh", "read_dump"]
