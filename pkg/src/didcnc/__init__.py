"""Joint flow control and database placement for data-intensive service chains."""

from .alg import AugmentedLayeredGraph, EfficientRoute, build_alg, edge_load, route_loads
from .controller import RouteInfeasible, SlotView, VirtualQueues, min_er
from .services import Client, Function, ServiceSpec, cumulative_scaling, zipf_popularity
from .topology import CachingVector, NetworkGraph, check_storage_feasible, grid_graph

__all__ = [
    "AugmentedLayeredGraph", "CachingVector", "Client", "EfficientRoute", "Function",
    "NetworkGraph", "RouteInfeasible", "ServiceSpec", "SlotView", "VirtualQueues",
    "build_alg", "check_storage_feasible", "cumulative_scaling", "edge_load", "grid_graph",
    "min_er", "route_loads", "zipf_popularity",
]
