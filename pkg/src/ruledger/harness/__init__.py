"""Scenario runner, attack suite, benchmarks, and the command line tool."""

from .scenario import ScenarioConfig, load_scenario
from .world import World, run_scenario

__all__ = ["ScenarioConfig", "load_scenario", "World", "run_scenario"]
