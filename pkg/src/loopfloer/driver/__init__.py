"""Scenario configuration, run orchestration, persistence and the command line."""

from .config import Scenario, builtin_scenarios, load_scenario, validate
from .runner import emit_report, run
from .store import RunStore

__all__ = ["Scenario", "builtin_scenarios", "load_scenario", "validate", "emit_report", "run", "RunStore"]
