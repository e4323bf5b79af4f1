"""Merge multi-path reasoning traces into a hypothesis graph, analyze it with
persistent homology, and aggregate an answer from its stable skeletons."""

from .config import RunConfig, load_config
from .ghg import HypothesisGraph, MergePolicy, build_graph, canonicalize
from .homology import PersistenceDiagram, bottleneck_distance, build_filtration, compute_persistence
from .pipeline import InstanceResult, run_batch, run_instance
from .traces import ProblemInstance, ReasoningPath, ReasoningStep, read_traces, write_traces

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config", "HypothesisGraph", "MergePolicy", "build_graph", "canonicalize",
    "PersistenceDiagram", "bottleneck_distance", "build_filtration", "compute_persistence",
    "InstanceResult", "run_batch", "run_instance", "ProblemInstance", "ReasoningPath",
    "ReasoningStep", "read_traces", "write_traces",
]
