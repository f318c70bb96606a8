"""Simulation and numerical analysis of a banking system with births,
defaults, and default contagion, together with its mean-field limits."""

from .rng import RngStream
from .model import (
    ModelSpec,
    RateFamily,
    DefaultRateFamily,
    DistFamily,
    ContagionFamily,
    Scaling,
    eval_rates,
    sample_dist,
    model_spec_from_dict,
    model_spec_to_dict,
)
from .empirical import (
    EmpiricalMeasure,
    EmptyMeasureError,
    measure_stats,
    wasserstein_p,
    fraction_below,
)

__version__ = "0.1.0"
