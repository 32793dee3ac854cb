"""Diffusion on mismeasured networks: simulation, estimation and replication tools."""

from netdiff.errors import (
    EstimationError,
    ExperimentError,
    FitError,
    InputError,
    NetdiffError,
    NumericError,
    PerturbationError,
)
from netdiff.graph import Graph, GraphStats, ball, distances_from, graph_stats, largest_component, union

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "GraphStats",
    "ball",
    "distances_from",
    "graph_stats",
    "largest_component",
    "union",
    "NetdiffError",
    "InputError",
    "ExperimentError",
    "EstimationError",
    "PerturbationError",
    "NumericError",
    "FitError",
]
