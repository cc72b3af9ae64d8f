"""Discrete-event MANET simulator for AODV and density-gated AODV (AODV_EXT)."""

from .config import ConfigError, ScenarioConfig, emit_scenario, parse_scenario
from .simulation import Simulation, run_single

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "Simulation",
    "emit_scenario",
    "parse_scenario",
    "run_single",
]

__version__ = "0.1.0"
