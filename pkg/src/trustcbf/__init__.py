"""Trust-aware robust event-triggered CBF control of CAVs at a signal-free intersection."""

from .model import ConfigError, ScenarioConfig, load_scenario, parse_scenario, validate_scenario
from .sim import Simulation, Trace, run, write_outputs
from .metrics import FuelModel, summarize

__version__ = "0.1.0"

__all__ = ["ConfigError", "ScenarioConfig", "load_scenario", "parse_scenario", "validate_scenario",
           "Simulation", "Trace", "run", "write_outputs", "FuelModel", "summarize"]
