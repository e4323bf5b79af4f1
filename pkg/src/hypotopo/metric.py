"""Node feature vectors, the mixed distance, and the sparsified KNN graph."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .ghg import HypothesisGraph
from .relations import Relation, RelationParams, RelationTable, relation_term

log = logging.getLogger(__name__)

CONF_EPS = 1e-6


@dataclass(frozen=True)
class MetricParams:
    alpha: float = 0.6
    beta: float = 0.3
    nu: float = 0.1
    k: int = 15
    tau_percentile: float = 95.0
    relation: RelationParams = RelationParams()

    def __post_init__(self):
        if abs(self.alpha + self.beta + self.nu - 1.0) > 1e-9:
            raise ValueError(f"alpha+beta+nu must equal 1, got {self.alpha + self.beta + self.nu}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < self.tau_percentile <= 100.0:
            raise ValueError("tau_percentile must lie in (0, 100]")


@dataclass
class NodeFeatures:
    """Row-aligned features: ``semantic`` (n, D), ``structural`` (n, 3), ``uncertainty`` (n,)."""

    semantic: np.ndarray
    structural: np.ndarray
    uncertainty: np.ndarray
    progress: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.semantic.shape[0]


def uncertainty(confidence) -> np.ndarray:
    return -np.log(np.asarray(confidence, dtype=np.float64) + CONF_EPS)


def zscore_columns(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        return x.copy()
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    out = np.zeros_like(x)
    ok = sd > 1e-12
    out[:, ok] = (x[:, ok] - mu[ok]) / sd[ok]
    return out


def bfs_depths(graph: HypothesisGraph) -> np.ndarray:
    """Multi-source BFS depth along derivation edges from every path start."""
    n = len(graph.nodes)
    succ = [set() for _ in range(n)]
    for a, b in graph.adjacency_pairs():
        succ[a].add(b)
    depth = np.full(n, -1, dtype=np.int64)
    q = deque()
    for s in graph.start_nodes():
        depth[s] = 0
        q.append(s)
    while q:
        u = q.popleft()
        for v in sorted(succ[u]):
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                q.append(v)
    depth[depth < 0] = 0
    return depth


def structural_raw(graph: HypothesisGraph) -> np.ndarray:
    """Unstandardized [progress, bfs depth / max depth, degree / (n-1)]."""
    n = len(graph.nodes)
    depth = bfs_depths(graph).astype(np.float64)
    dmax = depth.max() if n else 0.0
    depth_norm = depth / dmax if dmax > 0 else np.zeros(n)
    deg = np.array([len(s) for s in graph.neighbors()], dtype=np.float64)
    centrality = deg / (n - 1) if n > 1 else np.zeros(n)
    progress = np.array([v.progress for v in graph.nodes], dtype=np.float64)
    return np.column_stack([progress, depth_norm, centrality]) if n else np.zeros((0, 3))


def compute_features(graph: HypothesisGraph, embedder) -> NodeFeatures:
    canons = [v.canon for v in graph.nodes]
    sem = np.asarray(embedder.embed(canons), dtype=np.float64) if canons else np.zeros((0, 1))
    norms = np.linalg.norm(sem, axis=1, keepdims=True)
    sem = sem / np.where(norms > 0, norms, 1.0)
    return NodeFeatures(
        semantic=sem,
        structural=zscore_columns(structural_raw(graph)),
        uncertainty=uncertainty([v.confidence for v in graph.nodes]),
        progress=np.array([v.progress for v in graph.nodes], dtype=np.float64),
    )


def mixed_distance(i: int, j: int, feats: NodeFeatures, params: MetricParams = MetricParams(), relations: RelationTable | None = None) -> float:
    cos = float(np.dot(feats.semantic[i], feats.semantic[j]))
    l1 = float(np.abs(feats.structural[i] - feats.structural[j]).sum())
    d = params.alpha * (1.0 - cos) + params.beta * l1 + params.nu * (feats.uncertainty[i] + feats.uncertainty[j])
    if relations is not None and i != j:
        d += params.relation.delta_logic * relation_term(relations.get(i, j), params.relation)
    return max(0.0, d)


def distance_matrix(feats: NodeFeatures, params: MetricParams = MetricParams(), relations: RelationTable | None = None) -> np.ndarray:
    """All-pairs mixed distance; the diagonal holds the self-distance 2*nu*u_i."""
    e = feats.semantic
    cos = e @ e.T
    phi = feats.structural
    l1 = np.abs(phi[:, None, :] - phi[None, :, :]).sum(axis=2)
    u = feats.uncertainty
    d = params.alpha * (1.0 - cos) + params.beta * l1 + params.nu * (u[:, None] + u[None, :])
    if relations is not None:
        for pair, code in relations.items():
            if len(pair) != 2:
                continue
            a, b = tuple(pair)
            t = params.relation.delta_logic * relation_term(code, params.relation)
            d[a, b] += t
            d[b, a] += t
    d = np.maximum(d, 0.0)
    return 0.5 * (d + d.T)


@dataclass
class SparseMetricGraph:
    vertices: list[int]
    edges: dict[tuple[int, int], float]  # keys (i, j) with i < j
    tau_value: float
    k_used: int = 0

    def adjacency(self, eps: float | None = None) -> dict[int, dict[int, float]]:
        adj = {v: {} for v in self.vertices}
        for (a, b), w in self.edges.items():
            if eps is None or w <= eps:
                adj[a][b] = w
                adj[b][a] = w
        return adj

    def to_rows(self) -> list[tuple[int, int, float]]:
        return [(a, b, w) for (a, b), w in sorted(self.edges.items())]


def nearest_rank(values, p: float) -> float:
    """The ceil(p/100 * n)-th smallest value (1-based)."""
    vals = sorted(values)
    if not vals:
        raise ValueError("percentile of empty sequence")
    rank = max(1, math.ceil(p / 100.0 * len(vals)))
    return vals[min(rank, len(vals)) - 1]


def knn_graph_from_matrix(dist: np.ndarray, k: int = 15, tau_percentile: float = 95.0) -> SparseMetricGraph:
    n = dist.shape[0]
    if n == 0:
        return SparseMetricGraph([], {}, 0.0, 0)
    if n == 1:
        return SparseMetricGraph([0], {}, 0.0, 0)
    if k > n - 1:
        log.warning("k=%d clamped to %d for %d vertices", k, n - 1, n)
        k = n - 1
    edges: dict[tuple[int, int], float] = {}
    ids = np.arange(n)
    for i in range(n):
        others = ids[ids != i]
        # lexsort: primary key distance, secondary vertex id
        order = np.lexsort((others, dist[i, others]))
        for j in others[order[:k]]:
            a, b = (i, int(j)) if i < j else (int(j), i)
            edges[(a, b)] = float(dist[a, b])
    tau = nearest_rank(edges.values(), tau_percentile)
    kept = {e: w for e, w in edges.items() if w <= tau}
    return SparseMetricGraph(list(range(n)), kept, tau, k)


def build_knn_graph(feats: NodeFeatures, params: MetricParams = MetricParams(), relations: RelationTable | None = None) -> SparseMetricGraph:
    return knn_graph_from_matrix(distance_matrix(feats, params, relations), params.k, params.tau_percentile)


@dataclass
class MetricSpace:
    features: NodeFeatures
    dist: np.ndarray
    knn: SparseMetricGraph
    params: MetricParams


def build_metric_space(graph: HypothesisGraph, embedder, params: MetricParams = MetricParams(), relations: RelationTable | None = None, features: NodeFeatures | None = None) -> MetricSpace:
    feats = features if features is not None else compute_features(graph, embedder)
    dist = distance_matrix(feats, params, relations)
    return MetricSpace(feats, dist, knn_graph_from_matrix(dist, params.k, params.tau_percentile), params)


def dump_distance_csv(dist: np.ndarray, fh) -> None:
    fh.write("i,j,d\n")
    n = dist.shape[0]
    for i in range(n):
        for j in range(n):
            fh.write(f"{i},{j},{dist[i, j]!r}\n")
