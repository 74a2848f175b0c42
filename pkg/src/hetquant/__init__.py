"""Quantiles of heterogeneous unit-specific coefficients in panel data.

Two-step estimation (unit-by-unit least squares, then a cross-sectional
tau-quantile) with stochastic- and deterministic-design bootstrap inference.
"""

from .bootstrap import (
    BootstrapConfig,
    BootstrapRun,
    Design,
    confidence_interval,
    dqb_replicate,
    first_step_bootstrap,
    p_value_symmetric,
    resample_unit_time,
    run_bootstrap,
    sqb_replicate,
)
from .ols import OlsFitOptions, fit_all, fit_unit
from .panel import PanelData, PanelSchema, UnitEstimates, load_panel_csv, read_estimates_csv, write_estimates_csv
from .quantile import QuantileEstimate, QuantileTarget, aggregate, check_loss, quantile_curve, sample_quantile

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "BootstrapRun",
    "Design",
    "OlsFitOptions",
    "PanelData",
    "PanelSchema",
    "QuantileEstimate",
    "QuantileTarget",
    "UnitEstimates",
    "aggregate",
    "check_loss",
    "confidence_interval",
    "dqb_replicate",
    "first_step_bootstrap",
    "fit_all",
    "fit_unit",
    "load_panel_csv",
    "p_value_symmetric",
    "quantile_curve",
    "read_estimates_csv",
    "resample_unit_time",
    "run_bootstrap",
    "sample_quantile",
    "sqb_replicate",
    "write_estimates_csv",
]
