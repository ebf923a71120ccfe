"""Greedy modularity community detection with balance-aware merge heuristics.

The engine agglomerates singleton communities by repeatedly merging the
candidate pair with the best selection score, kept in sorted pair lists
with per-community best-pair links and a system-wide exact-score heap.
Beyond plain greedy modularity, three heuristics damp the gain by a
consolidation ratio so communities grow in balance, which is what makes
large scale-free graphs tractable.  All modularity arithmetic is exact
(integers scaled by 4*m**2).
"""

from .engine import (
    Community,
    CommunityPair,
    Dendrogram,
    EngineState,
    InternalError,
    MergeLog,
    MergeRecord,
    RunResult,
    STOP_COMPLETE,
    STOP_NEGATIVE_DQ,
    audit_state,
    init_state,
    merge_pair,
    run,
    select_global_pair,
    update_max_link,
)
from .estimator import GreedyCommunityClustering, as_graph
from .generators import GenSpec, generate, generate_ba, generate_er
from .graph import Graph, ParseError, dump_edge_list, graph_stats, load_edge_list
from .heuristics import Heuristic, Score, compare, ratio
from .metrics import (
    dendrogram_height,
    q_progress,
    ratio_series,
    read_dendrogram,
    read_merge_log,
    read_partition,
    scaling_fit,
    size_histogram,
    time_buckets,
    write_dendrogram,
    write_merge_log,
    write_partition,
)
from .modularity import (
    dq_scaled_init,
    dq_scaled_pair,
    dq_update_after_merge,
    q_scaled_scratch,
    q_value,
)

__version__ = "0.1.0"

__all__ = [
    "Community",
    "CommunityPair",
    "Dendrogram",
    "EngineState",
    "GenSpec",
    "Graph",
    "GreedyCommunityClustering",
    "Heuristic",
    "InternalError",
    "MergeLog",
    "MergeRecord",
    "ParseError",
    "RunResult",
    "STOP_COMPLETE",
    "STOP_NEGATIVE_DQ",
    "Score",
    "as_graph",
    "audit_state",
    "compare",
    "dendrogram_height",
    "dq_scaled_init",
    "dq_scaled_pair",
    "dq_update_after_merge",
    "dump_edge_list",
    "generate",
    "generate_ba",
    "generate_er",
    "graph_stats",
    "init_state",
    "load_edge_list",
    "merge_pair",
    "q_progress",
    "q_scaled_scratch",
    "q_value",
    "ratio",
    "ratio_series",
    "read_dendrogram",
    "read_merge_log",
    "read_partition",
    "run",
    "scaling_fit",
    "select_global_pair",
    "size_histogram",
    "time_buckets",
    "update_max_link",
    "write_dendrogram",
    "write_merge_log",
    "write_partition",
]
