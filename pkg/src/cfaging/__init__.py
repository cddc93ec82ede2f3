"""Cell-free massive MIMO uplink under channel aging: Monte Carlo and
large-system SINR engines, baselines and experiment presets."""

from .detequiv import DEOptions, det_equiv_all, det_equiv_sinr
from .harness import load_config, run_detequiv
from .numerics import RngStream, bessel_j0
from .results import ExperimentResult, SinrBreakdown
from .scenario import ScenarioConfig, desk_config, paper_config
from .uplink import run_monte_carlo

__all__ = [
    "DEOptions", "ExperimentResult", "RngStream", "ScenarioConfig", "SinrBreakdown", "bessel_j0",
    "desk_config", "det_equiv_all", "det_equiv_sinr", "load_config", "paper_config", "run_detequiv",
    "run_monte_carlo",
]
