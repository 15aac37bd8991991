"""Zone-path dispatch engine and simulator for multi-capacity ridesharing."""

from .network import (
    ConfigError,
    DemandTrace,
    Request,
    RoadNetwork,
    SyntheticConfig,
    VehicleState,
    generate_synthetic_city,
    load_network,
    load_trace,
)
from .zoning import Zoning, cluster_gbc, cluster_hac, singleton_zoning, zone_of
from .pathstore import PartialPath, PathIndex, build_index, enumerate_paths, get_paths_from_index
from .rpv import RPVGraph, ZonePath, build_rpv_graph
from .assign import AssignmentSolution, greedy_insertion_baseline, rebalance, solve_zac
from .future import FutureSampleSet, abstract_samples, benders_solve, solve_monolithic
from .sim import SimConfig, run_simulation

__all__ = [
    "AssignmentSolution",
    "ConfigError",
    "DemandTrace",
    "FutureSampleSet",
    "PartialPath",
    "PathIndex",
    "Request",
    "RoadNetwork",
    "RPVGraph",
    "SimConfig",
    "SyntheticConfig",
    "VehicleState",
    "Zoning",
    "ZonePath",
    "abstract_samples",
    "benders_solve",
    "build_index",
    "build_rpv_graph",
    "cluster_gbc",
    "cluster_hac",
    "enumerate_paths",
    "generate_synthetic_city",
    "get_paths_from_index",
    "greedy_insertion_baseline",
    "load_network",
    "load_trace",
    "rebalance",
    "run_simulation",
    "singleton_zoning",
    "solve_monolithic",
    "solve_zac",
    "zone_of",
]
