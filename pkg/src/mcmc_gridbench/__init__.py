"""Graphical benchmarking of MCMC samplers.

The figure of merit is log-density evaluations per independent observation:
average evaluations per iteration multiplied by the autocorrelation time of
the slowest-mixing coordinate.
"""

from mcmc_gridbench.act import (
    ActEstimate,
    ActOptions,
    ArFit,
    SeriesView,
    Status,
    estimate_act,
)
from mcmc_gridbench.distributions import TargetDistribution, get_distribution
from mcmc_gridbench.harness import CellResult, SimulationConfig, run_chain, run_grid

__version__ = "0.1.0"

__all__ = [
    "ActEstimate",
    "ActOptions",
    "ArFit",
    "CellResult",
    "SeriesView",
    "SimulationConfig",
    "Status",
    "TargetDistribution",
    "estimate_act",
    "get_distribution",
    "run_chain",
    "run_grid",
]
