"""Joint 3D placement, subcarrier/modulation allocation and user association
of aerial base stations collecting uplink data from ground IoT devices."""

from .model import (
    GENERALIZED,
    LOS,
    Assignment,
    ChannelParams,
    ModulationTable,
    Placement,
    Scenario,
    modulation_constants,
    total_power,
)

from .bilp import build_costs, greedy_initial_assignment, solve_bilp
from .experiments import SweepSpec, export_csv, generate_scenario, run_sweep
from .optimizer import AlternatingConfig, complexity_estimate, fixed_abs_baseline, run_alternating

__all__ = [
    "AlternatingConfig",
    "SweepSpec",
    "build_costs",
    "complexity_estimate",
    "export_csv",
    "fixed_abs_baseline",
    "generate_scenario",
    "greedy_initial_assignment",
    "run_alternating",
    "run_sweep",
    "solve_bilp",
    "GENERALIZED",
    "LOS",
    "Assignment",
    "ChannelParams",
    "ModulationTable",
    "Placement",
    "Scenario",
    "modulation_constants",
    "total_power",
]

__version__ = "0.1.0"
