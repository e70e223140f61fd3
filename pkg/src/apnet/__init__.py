"""Adaptive active-passive networked multiagent simulator.

Agents on a connected graph reach dynamic consensus on the average of the
inputs sensed by the currently active subset, while an adaptive layer
estimates and cancels information-exchange corruption. A coverage layer
steers the mobile sensors toward density-weighted Voronoi centroids, and a
service streams the live simulation for interactive target steering.
"""
from .graph import Graph, build_graph, laplacian_pinv, regularized_laplacian
from .projection import ProjectionBounds, proj, proj_matrix
from .scenario import ScenarioConfig, load_scenario
from .engine import Engine, Trace, run_scenario

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "build_graph",
    "laplacian_pinv",
    "regularized_laplacian",
    "ProjectionBounds",
    "proj",
    "proj_matrix",
    "ScenarioConfig",
    "load_scenario",
    "Engine",
    "Trace",
    "run_scenario",
    "__version__",
]
