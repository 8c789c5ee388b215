"""Delivery-ratio simulation for multi-hop ad hoc networks under log-normal shadowing."""

from .analytics import RectRegion, hop_estimate, link_distance_pdf, mean_link_distance
from .engine import MetricsReport, ScenarioConfig, run, run_replicated, scenario_suite
from .propagation import RadioParams, TABLE1, prob_above_threshold, tworay_range

__version__ = "0.1.0"

__all__ = [
    "RectRegion", "hop_estimate", "link_distance_pdf", "mean_link_distance",
    "MetricsReport", "ScenarioConfig", "run", "run_replicated", "scenario_suite",
    "RadioParams", "TABLE1", "prob_above_threshold", "tworay_range",
]
