"""Transmission and storage expansion planning with Monte Carlo reliability assessment."""

__version__ = "0.1.0"

from .expansion import ExpansionCase, ExpansionPlan, ExpansionPlanner, apply_plan, solve_expansion  # noqa: E402
from .ingest import fixture_ercot7, load_network, synthesize_profiles, write_network  # noqa: E402
from .metrics import compute_metrics, cost_of_reliability, relative_change, annualize  # noqa: E402
from .network import Network, validate_network  # noqa: E402
from .powerflow import compute_ptdf, line_flows  # noqa: E402
from .reliability import ReliabilityAssessor, dispatch_schedule, redispatch_hour, run_monte_carlo  # noqa: E402

__all__ = [
    "ExpansionCase", "ExpansionPlan", "ExpansionPlanner", "apply_plan", "solve_expansion",
    "fixture_ercot7", "load_network", "synthesize_profiles", "write_network",
    "compute_metrics", "cost_of_reliability", "relative_change", "annualize",
    "Network", "validate_network", "compute_ptdf", "line_flows",
    "ReliabilityAssessor", "dispatch_schedule", "redispatch_hour", "run_monte_carlo",
]
