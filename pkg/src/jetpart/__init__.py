"""Multilevel k-way graph partitioning with distributed Jet refinement,
executed on a deterministic simulation of a distributed-memory machine."""

from .dist import DistGraph, DistPartition, Engine, distribute
from .graph import Graph, GraphFormatError, edge_cut, gen_grid, gen_rgg2d, parse_metis, read_metis, write_metis
from .multilevel import JetConfig, PartitionResult, partition
from .partition import Partition, conn, l_max
from .profile import RunRecord, performance_profile
from .rebalance import Rebalancer, bucket_index, rebalance

__all__ = [
    "DistGraph",
    "DistPartition",
    "Engine",
    "Graph",
    "GraphFormatError",
    "JetConfig",
    "Partition",
    "PartitionResult",
    "Rebalancer",
    "RunRecord",
    "bucket_index",
    "conn",
    "distribute",
    "edge_cut",
    "gen_grid",
    "gen_rgg2d",
    "l_max",
    "parse_metis",
    "partition",
    "performance_profile",
    "read_metis",
    "rebalance",
    "write_metis",
]

__version__ = "0.1.0"
