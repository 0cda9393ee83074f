"""Deterministic simulation of BLE advertising-based time synchronization for multi-IMU networks."""

from .engine import RunReport, Simulator, run
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = ["RunReport", "Scenario", "Simulator", "load_scenario", "parse_scenario", "run"]
