"""Map selected persistence features back onto the hypothesis graph.

Clusters come from the H0 operating scale, loops from each selected H1 pair
at its own scale.  Each surviving cluster yields a shortest-path backbone,
optionally rerouted through its principal loop.
"""
from __future__ import annotations

import heapq
import logging
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ghg import HypothesisGraph
from .homology import PersistencePair
from .metric import SparseMetricGraph

log = logging.getLogger(__name__)

Adj = dict[int, dict[int, float]]


def threshold_graph(metric: SparseMetricGraph, eps: float) -> Adj:
    """All vertices, plus the edges of weight <= eps."""
    return metric.adjacency(eps)


def components(adj: Adj) -> list[list[int]]:
    seen, out = set(), []
    for s in sorted(adj):
        if s in seen:
            continue
        comp, stack = [], [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        out.append(sorted(comp))
    return out


def dijkstra(adj: Adj, src: int, allowed: set[int] | None = None) -> dict[int, tuple[float, tuple[int, ...]]]:
    """Shortest paths from ``src``; equal costs resolved by the lexicographically smaller node sequence."""
    best: dict[int, tuple[float, tuple[int, ...]]] = {src: (0.0, (src,))}
    heap = [(0.0, (src,))]
    done = set()
    while heap:
        cost, path = heapq.heappop(heap)
        u = path[-1]
        if u in done or best[u] != (cost, path):
            continue
        done.add(u)
        for v, w in adj[u].items():
            if v in done or (allowed is not None and v not in allowed) or v in path:
                continue
            cand = (cost + w, path + (v,))
            if v not in best or cand < best[v]:
                best[v] = cand
                heapq.heappush(heap, cand)
    return best


def shortest_path(adj: Adj, s: int, t: int, allowed: set[int] | None = None) -> tuple[float, list[int]] | None:
    if s == t:
        return 0.0, [s]
    res = dijkstra(adj, s, allowed).get(t)
    return None if res is None else (res[0], list(res[1]))


def path_cost(adj: Adj, path: Sequence[int]) -> float:
    return sum(adj[a][b] for a, b in zip(path, path[1:]) if a != b)


# --- clusters ---------------------------------------------------------------

@dataclass
class Cluster:
    index: int
    members: list[int]
    start: int
    goal: int
    path_ids: list[str]
    backbone: list[int] = field(default_factory=list)
    backbone_cost: float = 0.0
    loops: list["LoopFeature"] = field(default_factory=list)
    principal_loop: "LoopFeature | None" = None

    @property
    def has_principal_loop(self) -> bool:
        return self.principal_loop is not None

    def __len__(self):
        return len(self.members)


def _anchor(members: list[int], progress: np.ndarray, dist: np.ndarray | None, pick_max: bool) -> int:
    vals = progress[members]
    target = vals.max() if pick_max else vals.min()
    tied = [v for v in members if progress[v] == target]
    if len(tied) == 1 or dist is None:
        return min(tied)

    def avg(v):
        others = [u for u in members if u != v]
        return float(dist[v, others].mean()) if others else 0.0

    return min(tied, key=lambda v: (avg(v), v))


def extract_clusters(adj: Adj, graph: HypothesisGraph, dist: np.ndarray | None = None, min_size: int = 4, min_paths: int = 2) -> list[Cluster]:
    """Components with more than three nodes that cover at least two paths."""
    progress = np.array([v.progress for v in graph.nodes])
    out = []
    for comp in components(adj):
        pids = sorted(set().union(*(graph.nodes[v].path_ids for v in comp)))
        if len(comp) < min_size or len(pids) < min_paths:
            continue
        out.append(Cluster(
            index=len(out),
            members=comp,
            start=_anchor(comp, progress, dist, pick_max=False),
            goal=_anchor(comp, progress, dist, pick_max=True),
            path_ids=pids,
        ))
    return out


def backbone(cluster: Cluster, adj: Adj) -> tuple[float, list[int]]:
    res = shortest_path(adj, cluster.start, cluster.goal, allowed=set(cluster.members))
    if res is None:
        raise ValueError(f"anchors {cluster.start} and {cluster.goal} are disconnected")
    return res


# --- loops ------------------------------------------------------------------

@dataclass
class LoopFeature:
    index: int  # position in the selected H1 list
    pair: PersistencePair
    eps: float
    lifespan: float  # essential loops are capped at the filtration maximum
    support: list[int]
    representative: list[int]
    cluster: int | None = None


def localize_loop(pair: PersistencePair, metric: SparseMetricGraph, eps_b: float) -> list[int] | None:
    """Representative vertices, stitched through G(eps_b) where an edge is missing."""
    if not pair.representative:
        log.warning("H1 pair born at %.4g has no representative; skipped", pair.birth)
        return None
    adj = metric.adjacency(eps_b)
    support = set(pair.vertices())
    for a, b in pair.representative:
        if b in adj[a]:
            continue
        res = shortest_path(adj, a, b)
        if res is not None:
            support.update(res[1])
    return sorted(support)


def assign_loops(loops: Sequence[LoopFeature], clusters: Sequence[Cluster]) -> None:
    """Attach each loop to the cluster of maximal overlap and pick principal loops."""
    for lp in loops:
        sup = set(lp.support)
        best, best_key = None, None
        for c in clusters:
            ov = len(sup & set(c.members))
            if ov == 0:
                continue
            key = (ov, len(c), -c.index)
            if best_key is None or key > best_key:
                best, best_key = c, key
        lp.cluster = None if best is None else best.index
        if best is not None:
            best.loops.append(lp)
    for c in clusters:
        if c.loops:
            c.principal_loop = min(c.loops, key=lambda lp: (-lp.lifespan, lp.pair.birth, lp.index))


def _cycle_edges(cyc: Sequence[int]) -> list[tuple[int, int]]:
    return [(min(a, b), max(a, b)) for a, b in zip(cyc, list(cyc[1:]) + [cyc[0]])]


def horton_candidates(adj: Adj) -> list[tuple[float, list[int]]]:
    """Horton's candidate set: SP(v, x) + (x, y) + SP(y, v), kept when simple."""
    edges = sorted({(min(a, b), max(a, b)) for a in adj for b in adj[a]})
    seen, out = set(), []
    for v in sorted(adj):
        sp = dijkstra(adj, v)
        for x, y in edges:
            if x not in sp or y not in sp:
                continue
            px, py = sp[x][1], sp[y][1]
            if len(px) + len(py) - 1 < 3 or set(px) & set(py) != {v}:
                continue
            cyc = list(px) + list(reversed(py))[:-1]
            key = frozenset(_cycle_edges(cyc))
            if len(key) != len(cyc) or key in seen:
                continue
            seen.add(key)
            out.append((sum(adj[a][b] for a, b in key), cyc))
    out.sort(key=lambda t: (t[0], len(t[1]), sorted(_cycle_edges(t[1]))))
    return out


def minimum_cycle_basis(adj: Adj) -> list[tuple[float, list[int]]]:
    """Greedy GF(2)-independent selection over Horton candidates."""
    edges = sorted({(min(a, b), max(a, b)) for a in adj for b in adj[a]})
    bit = {e: i for i, e in enumerate(edges)}
    rank = len(edges) - len(adj) + len(components(adj))
    basis: dict[int, int] = {}
    chosen = []
    for w, cyc in horton_candidates(adj):
        if len(chosen) >= rank:
            break
        vec = 0
        for e in _cycle_edges(cyc):
            vec ^= 1 << bit[e]
        while vec:
            top = vec.bit_length() - 1
            if top not in basis:
                basis[top] = vec
                chosen.append((w, cyc))
                break
            vec ^= basis[top]
    return chosen


def cycle_tour(support: Sequence[int], metric: SparseMetricGraph, eps_b: float, representative: Sequence[int] = (), progress: np.ndarray | None = None) -> tuple[list[int], float] | None:
    """Closed walk (first vertex not repeated) for a loop's support.

    Prefers the minimum-basis cycle covering the most representative vertices;
    falls back to stitching representative vertices in progress order.
    """
    full = metric.adjacency(eps_b)
    sup = set(support)
    induced = {v: {u: w for u, w in full[v].items() if u in sup} for v in sorted(sup)}
    rep = set(representative) or sup
    basis = minimum_cycle_basis(induced)
    if basis:
        w, cyc = min(basis, key=lambda t: (-len(rep & set(t[1])), t[0], len(t[1]), sorted(_cycle_edges(t[1]))))
        return cyc, w
    order = sorted(rep, key=lambda v: ((progress[v] if progress is not None else 0.0), v))
    if len(order) < 3:
        return None
    walk: list[int] = [order[0]]
    total = 0.0
    for a, b in zip(order, order[1:] + order[:1]):
        res = shortest_path(full, a, b)
        if res is None:
            return None
        total += res[0]
        walk.extend(res[1][1:])
    walk = walk[:-1]
    if len(set(walk)) < 3:
        return None
    return walk, total


def orient_tour(tour: Sequence[int], pivot: int) -> list[int]:
    """Rotate the closed walk to start and end at ``pivot``; step first to the lower id."""
    i = list(tour).index(pivot)
    fwd = list(tour[i:]) + list(tour[:i])
    back = [fwd[0]] + fwd[1:][::-1]
    walk = fwd if len(fwd) < 2 or fwd[1] <= back[1] else back
    return walk + [pivot]


@dataclass(frozen=True)
class SpliceParams:
    delta_loop: float = 0.15
    lam: float = 0.15

    def __post_init__(self):
        if self.delta_loop <= 0:
            raise ValueError("delta_loop must be positive")
        if not 0.1 <= self.lam <= 0.2:
            raise ValueError("lambda must lie in [0.1, 0.2]")

    def effective(self, eps_b: float) -> float:
        return min(self.delta_loop, self.lam * eps_b)


def choose_pivot(support: Sequence[int], members: Sequence[int], progress: np.ndarray) -> int:
    med = statistics.median(float(progress[u]) for u in members)
    return min(support, key=lambda v: (abs(float(progress[v]) - med), v))


def cross_distance(tour: Sequence[int], path: Sequence[int], dist: np.ndarray) -> float:
    """Closest tour/backbone pair; a shared vertex counts as distance 0."""
    best = np.inf
    for v in set(tour):
        for u in set(path):
            best = min(best, 0.0 if u == v else float(dist[v, u]))
    return best


def _collapse(walk: Sequence[int]) -> list[int]:
    out: list[int] = []
    for v in walk:
        if not out or out[-1] != v:
            out.append(v)
    return out


@dataclass
class SpliceResult:
    path: list[int]
    spliced: bool
    cross: float
    threshold: float


def splice(backbone_path: Sequence[int], tour: Sequence[int], pivot: int, adj: Adj, dist: np.ndarray, params: SpliceParams, eps_b: float) -> SpliceResult:
    """Reroute start -> pivot -> tour -> pivot -> goal when the loop sits close enough."""
    thr = params.effective(eps_b)
    cross = cross_distance(tour, backbone_path, dist)
    if not cross < thr:
        return SpliceResult(list(backbone_path), False, cross, thr)
    s, g = backbone_path[0], backbone_path[-1]
    closed = list(tour)
    if pivot in closed:
        loop_walk = orient_tour(closed, pivot)
    else:
        best = None
        for t in sorted(set(closed)):
            res = shortest_path(adj, pivot, t)
            if res is not None and (best is None or (res[0], res[1]) < best):
                best = (res[0], res[1])
        if best is None:
            return SpliceResult(list(backbone_path), False, cross, thr)
        link = best[1]
        loop_walk = link + orient_tour(closed, link[-1])[1:] + link[::-1][1:]
    head = shortest_path(adj, s, pivot)
    tail = shortest_path(adj, pivot, g)
    if head is None or tail is None:
        return SpliceResult(list(backbone_path), False, cross, thr)
    return SpliceResult(_collapse(head[1] + loop_walk[1:] + tail[1][1:]), True, cross, thr)


# --- skeletons ----------------------------------------------------------------

@dataclass
class Skeleton:
    cluster: Cluster
    path: list[int]
    spliced: bool = False
    pivot: int | None = None
    tour: list[int] = field(default_factory=list)
    adj: Adj = field(default_factory=dict)  # graph the walk lives in (degrees come from here)
    contributing_paths: int = 0
    avg_edge_weight: float = 0.0

    @property
    def loop_lifespan(self) -> float:
        lp = self.cluster.principal_loop
        return lp.lifespan if lp is not None else 0.0

    def degree(self, v: int) -> int:
        return len(self.adj.get(v, {}))

    def on_tour(self, v: int) -> bool:
        return self.spliced and v in self.tour


def rank_key(c: Cluster):
    lp = c.principal_loop
    return (0 if lp is not None else 1, -(lp.lifespan if lp else 0.0), -len(c), c.backbone_cost, c.index)


def rank_clusters(clusters: Sequence[Cluster]) -> list[Cluster]:
    return sorted(clusters, key=rank_key)


def _merge_adj(a: Adj, b: Adj) -> Adj:
    out = {v: dict(nb) for v, nb in a.items()}
    for v, nb in b.items():
        out.setdefault(v, {}).update(nb)
    return out


def extract_skeletons(
    graph: HypothesisGraph,
    metric: SparseMetricGraph,
    dist: np.ndarray,
    eps_h0: float,
    loops_selected: Sequence[PersistencePair],
    loop_scales: dict[int, float],
    params: SpliceParams = SpliceParams(),
    cap: float | None = None,
) -> tuple[list[Skeleton], list[LoopFeature]]:
    progress = np.array([v.progress for v in graph.nodes])
    cap = metric.tau_value if cap is None else cap
    base = threshold_graph(metric, eps_h0)
    clusters = extract_clusters(base, graph, dist)
    for c in clusters:
        c.backbone_cost, c.backbone = backbone(c, base)

    loops = []
    for i, pair in enumerate(loops_selected):
        eps_b = loop_scales[i]
        sup = localize_loop(pair, metric, eps_b)
        if not sup:
            continue
        loops.append(LoopFeature(i, pair, eps_b, pair.capped_lifespan(cap), sup, pair.vertices()))
    assign_loops(loops, clusters)

    skeletons = []
    for c in rank_clusters(clusters):
        sk = Skeleton(cluster=c, path=list(c.backbone), adj=base)
        lp = c.principal_loop
        if lp is not None:
            pivot = choose_pivot(lp.support, c.members, progress)
            tour = cycle_tour(lp.support, metric, lp.eps, lp.representative, progress)
            if tour is not None:
                cyc = tour[0]
                full = metric.adjacency(lp.eps)
                touched = set(lp.support) | set(cyc)
                loop_adj = {v: {u: w for u, w in full[v].items() if u in touched} for v in touched}
                union = _merge_adj(base, loop_adj)
                res = splice(c.backbone, cyc, pivot, union, dist, params, lp.eps)
                sk.pivot = pivot
                if res.spliced:
                    sk.path, sk.spliced, sk.tour, sk.adj = res.path, True, list(cyc), union
        nodes = set(sk.path)
        sk.contributing_paths = len(set().union(*(graph.nodes[v].path_ids for v in nodes)))
        steps = [(a, b) for a, b in zip(sk.path, sk.path[1:]) if a != b]
        sk.avg_edge_weight = float(np.mean([sk.adj[a][b] for a, b in steps])) if steps else 0.0
        skeletons.append(sk)
    return skeletons, loops
