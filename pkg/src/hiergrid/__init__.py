"""Hierarchical day-ahead / real-time grid reliability simulator and learner."""

from hiergrid.grid import GridCase, load_case, connected_components, apply_outage
from hiergrid.powerflow import solve_dc, check_feasibility, n1_reward

__all__ = [
    "GridCase",
    "load_case",
    "connected_components",
    "apply_outage",
    "solve_dc",
    "check_feasibility",
    "n1_reward",
]

__version__ = "0.1.0"
