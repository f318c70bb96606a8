"""Figure rendering for the simulation harness CSV files.

The package consumes only the documented CSV schemas (time grids, event
logs, quantile fans, threshold histograms, particle snapshots) and knows
nothing about how they were produced.
"""

from .schemas import SCHEMAS, SchemaError, read_table
from .kde import kde_curve, silverman_bandwidth
from .render import PlotJob, render

__all__ = [
    "SCHEMAS",
    "SchemaError",
    "read_table",
    "kde_curve",
    "silverman_bandwidth",
    "PlotJob",
    "render",
]

__version__ = "0.1.0"
