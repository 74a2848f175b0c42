"""Simulated panels, Monte Carlo coverage studies and asymptotic oracles."""

from .dgp import (
    DgpSpec,
    Family,
    Heterogeneity,
    NuisanceSlopes,
    ScaleMode,
    gen_theta,
    oracle_asymptotic_sd,
    simulate_panel,
    true_quantile,
)
from .experiment import (
    CellResult,
    CoverageCell,
    CoverageReport,
    SimulationFailure,
    run_coverage_experiment,
    simulate_estimates,
)
from .presets import SimulationSpec, list_presets, load_preset, load_simulation_spec

__all__ = [
    "CellResult",
    "CoverageCell",
    "CoverageReport",
    "DgpSpec",
    "Family",
    "Heterogeneity",
    "NuisanceSlopes",
    "ScaleMode",
    "SimulationFailure",
    "SimulationSpec",
    "gen_theta",
    "list_presets",
    "load_preset",
    "load_simulation_spec",
    "oracle_asymptotic_sd",
    "run_coverage_experiment",
    "simulate_estimates",
    "simulate_panel",
    "true_quantile",
]
