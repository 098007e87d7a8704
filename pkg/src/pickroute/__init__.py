"""Single-picker warehouse routing: tour-graph MDP, exact DP, heuristics and a learned attention policy."""
from .exact import brute_force_tsp, solve_optimal
from .heuristics import HeuristicKind, composite, largest_gap, return_policy, run_heuristic, s_shape
from .tourgraph import ActionPair, EqState, HorizontalAction, Rollout, VerticalAction
from .warehouse import (
    Instance,
    Location,
    ProblemClass,
    WarehouseGeometry,
    generate_instance,
    route_length,
    shortest_path_distance,
    to_aisle_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "ActionPair", "EqState", "HeuristicKind", "HorizontalAction", "Instance", "Location",
    "ProblemClass", "Rollout", "VerticalAction", "WarehouseGeometry", "brute_force_tsp",
    "composite", "generate_instance", "largest_gap", "return_policy", "route_length",
    "run_heuristic", "s_shape", "shortest_path_distance", "solve_optimal", "to_aisle_sequence",
]
