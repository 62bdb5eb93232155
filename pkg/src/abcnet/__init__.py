"""Active betweenness cardinality: traffic simulation, HyperLogLog node
sketches, local search for critical nodes and failure detection."""
from .graph import Graph, RouteCache, bfs_sssp, exact_betweenness, load_edge_list, remove_node, sample_route
from .sketch import ExactCounter, HllSketch, encode_key
from .simulator import Experiment, SimConfig, SimState, edge_abc, node_abc, run_interval
from .traffic import TrafficModel, assign_levels, sample_pair

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "RouteCache",
    "bfs_sssp",
    "exact_betweenness",
    "load_edge_list",
    "remove_node",
    "sample_route",
    "ExactCounter",
    "HllSketch",
    "encode_key",
    "Experiment",
    "SimConfig",
    "SimState",
    "edge_abc",
    "node_abc",
    "run_interval",
    "TrafficModel",
    "assign_levels",
    "sample_pair",
]
