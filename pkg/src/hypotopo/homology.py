"""Clique (Vietoris-Rips) filtration on a sparse weighted graph and its H0/H1 persistence."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .metric import SparseMetricGraph

log = logging.getLogger(__name__)

INF = math.inf
Simplex = tuple[int, ...]


@dataclass
class Filtration:
    simplices: list[Simplex]
    values: list[float]
    n_vertices: int
    max_value: float = 0.0

    def __len__(self):
        return len(self.simplices)

    def dims(self) -> list[int]:
        return [len(s) - 1 for s in self.simplices]


def build_filtration(g: SparseMetricGraph) -> Filtration:
    """Vertices at 0, retained edges at their weight, 3-cliques at their max edge."""
    items: list[tuple[float, int, Simplex]] = [(0.0, 0, (v,)) for v in g.vertices]
    nbr: dict[int, set[int]] = {v: set() for v in g.vertices}
    for (a, b), w in g.edges.items():
        a, b = min(a, b), max(a, b)
        items.append((float(w), 1, (a, b)))
        nbr[a].add(b)
        nbr[b].add(a)
    weight = {(min(a, b), max(a, b)): float(w) for (a, b), w in g.edges.items()}
    for (a, b) in weight:
        for c in nbr[a] & nbr[b]:
            if c > b:
                val = max(weight[(a, b)], weight[(a, c)], weight[(b, c)])
                items.append((val, 2, (a, b, c)))
    items.sort()
    return Filtration(
        simplices=[s for _, _, s in items],
        values=[v for v, _, _ in items],
        n_vertices=len(g.vertices),
        max_value=max((v for v, _, _ in items), default=0.0),
    )


def filtration_from_weights(n: int, weights: dict[tuple[int, int], float]) -> Filtration:
    return build_filtration(SparseMetricGraph(list(range(n)), dict(weights), max(weights.values(), default=0.0)))


@dataclass(frozen=True)
class PersistencePair:
    dimension: int
    birth: float
    death: float
    representative: tuple[tuple[int, int], ...] | None = None
    birth_simplex: Simplex = ()
    death_simplex: Simplex | None = None

    @property
    def lifespan(self) -> float:
        return self.death - self.birth

    @property
    def is_essential(self) -> bool:
        return math.isinf(self.death)

    def capped_death(self, cap: float) -> float:
        return min(self.death, max(cap, self.birth))

    def capped_lifespan(self, cap: float) -> float:
        return self.capped_death(cap) - self.birth

    def vertices(self) -> list[int]:
        if not self.representative:
            return list(self.birth_simplex)
        return sorted({v for e in self.representative for v in e})


@dataclass
class PersistenceDiagram:
    pairs: list[PersistencePair]
    tau_value: float = 0.0
    max_value: float = 0.0
    params_hash: str = ""

    def dim(self, d: int) -> list[PersistencePair]:
        return [p for p in self.pairs if p.dimension == d]

    def points(self, d: int) -> list[tuple[float, float]]:
        return sorted((p.birth, p.death) for p in self.dim(d))

    def to_rows(self) -> list[tuple[int, float, float, float]]:
        return [(p.dimension, p.birth, p.death, p.lifespan) for p in self.pairs]


def _boundary(simplex: Simplex, index: dict[Simplex, int]) -> set[int]:
    if len(simplex) == 1:
        return set()
    out = set()
    for k in range(len(simplex)):
        out.add(index[simplex[:k] + simplex[k + 1:]])
    return out


def compute_persistence(f: Filtration) -> PersistenceDiagram:
    """Column reduction over GF(2) in filtration order.

    Edge columns also carry their reduction chain so that an edge which
    reduces to zero yields an explicit cycle (the H1 representative).
    """
    index = {s: i for i, s in enumerate(f.simplices)}
    pivot_col: dict[int, int] = {}  # low row -> column
    reduced: dict[int, set[int]] = {}
    chains: dict[int, set[int]] = {}
    cycles: dict[int, set[int]] = {}
    paired: set[int] = set()
    raw_pairs: list[tuple[int, int]] = []
    for j, s in enumerate(f.simplices):
        dim = len(s) - 1
        if dim == 0:
            continue
        col = _boundary(s, index)
        chain = {j} if dim == 1 else None
        while col:
            low = max(col)
            k = pivot_col.get(low)
            if k is None:
                break
            col ^= reduced[k]
            if chain is not None:
                chain ^= chains[k]
        if col:
            low = max(col)
            pivot_col[low] = j
            reduced[j] = col
            if chain is not None:
                chains[j] = chain
            paired.add(low)
            paired.add(j)
            raw_pairs.append((low, j))
        elif dim == 1:
            cycles[j] = chain

    def rep(edge_col: int):
        if edge_col not in cycles:
            return None
        return tuple(sorted(f.simplices[c] for c in cycles[edge_col]))

    pairs = []
    for i, j in raw_pairs:
        dim = len(f.simplices[i]) - 1
        if dim > 1:
            continue
        pairs.append(PersistencePair(
            dimension=dim,
            birth=f.values[i],
            death=f.values[j],
            representative=rep(i) if dim == 1 else None,
            birth_simplex=f.simplices[i],
            death_simplex=f.simplices[j],
        ))
    for i, s in enumerate(f.simplices):
        dim = len(s) - 1
        if i in paired or dim > 1:
            continue
        if dim == 1 and i not in cycles:
            continue
        pairs.append(PersistencePair(
            dimension=dim,
            birth=f.values[i],
            death=INF,
            representative=rep(i) if dim == 1 else None,
            birth_simplex=s,
        ))
    pairs.sort(key=lambda p: (p.dimension, p.birth, p.death, p.birth_simplex))
    return PersistenceDiagram(pairs, max_value=f.max_value)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def h0_union_find(f: Filtration) -> list[tuple[float, float]]:
    """H0 (birth, death) multiset by Kruskal over the filtration's edges."""
    verts = [s[0] for s in f.simplices if len(s) == 1]
    pos = {v: i for i, v in enumerate(verts)}
    uf = UnionFind(len(verts))
    out = []
    for s, val in zip(f.simplices, f.values):
        if len(s) == 2 and uf.union(pos[s[0]], pos[s[1]]):
            out.append((0.0, val))
    n_components = len({uf.find(i) for i in range(len(verts))})
    out.extend([(0.0, INF)] * n_components)
    return sorted(out)


# --- selection and operating scales -----------------------------------------

class SelectionMode(str, Enum):
    TOP_K = "top_k"
    TOP_Q_PERCENT = "top_q_percent"


@dataclass(frozen=True)
class SelectionPolicy:
    mode: SelectionMode = SelectionMode.TOP_K
    K: int = 5
    q: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "mode", SelectionMode(self.mode))
        if self.mode is SelectionMode.TOP_K and self.K < 1:
            raise ValueError("K must be >= 1")
        if self.mode is SelectionMode.TOP_Q_PERCENT and not 0.0 < self.q <= 100.0:
            raise ValueError("q must lie in (0, 100]")


def _rank_key(p: PersistencePair):
    return (-p.lifespan, p.birth, p.representative or (), p.birth_simplex)


def select_dimension(pairs: Sequence[PersistencePair], policy: SelectionPolicy) -> list[PersistencePair]:
    live = sorted((p for p in pairs if p.lifespan > 0), key=_rank_key)
    if policy.mode is SelectionMode.TOP_K:
        return live[: policy.K]
    return live[: math.ceil(policy.q / 100.0 * len(live))]


def select_features(dgm: PersistenceDiagram, policy: SelectionPolicy = SelectionPolicy()) -> tuple[list[PersistencePair], list[PersistencePair]]:
    return select_dimension(dgm.dim(0), policy), select_dimension(dgm.dim(1), policy)


def lower_median(values: Sequence[float]) -> float:
    vals = sorted(values)
    return vals[(len(vals) - 1) // 2]


@dataclass
class OperatingScales:
    eps_h0: float
    eps_per_loop: dict[int, float] = field(default_factory=dict)  # index into B1* -> scale
    h0_fallback: bool = False


def loop_scale(pair: PersistencePair, cap: float) -> float:
    """0.99 * death; essential loops use the largest filtration value instead."""
    return 0.99 * pair.capped_death(cap)


def operating_scales(B0: Sequence[PersistencePair], B1: Sequence[PersistencePair], tau_value: float = 0.0) -> OperatingScales:
    finite = [p.death for p in B0 if not p.is_essential]
    if finite:
        eps, fallback = lower_median(finite), False
    else:
        log.warning("no finite H0 death among selected features; using tau=%.6g", tau_value)
        eps, fallback = tau_value, True
    return OperatingScales(eps, {i: loop_scale(p, tau_value) for i, p in enumerate(B1)}, fallback)


# --- bottleneck distance ----------------------------------------------------

def _as_points(dgm) -> list[tuple[float, float]]:
    if isinstance(dgm, PersistenceDiagram):
        raise TypeError("pass dgm.points(dim) or use bottleneck_distance(dgm_a, dgm_b, dim)")
    return [(float(b), float(d)) for b, d in dgm]


def _finite_bottleneck(A: list[tuple[float, float]], B: list[tuple[float, float]]) -> float:
    n, m = len(A), len(B)
    if n == 0 and m == 0:
        return 0.0
    size = n + m
    # rows: A points then diagonal slots for B; columns: B points then diagonal slots for A
    cost = np.zeros((size, size))
    cost[:n, :m] = [[max(abs(a[0] - b[0]), abs(a[1] - b[1])) for b in B] for a in A] if n and m else 0.0
    cost[:n, m:] = INF
    for i, a in enumerate(A):
        cost[i, m + i] = (a[1] - a[0]) / 2.0
    cost[n:, :m] = INF
    for j, b in enumerate(B):
        cost[n + j, j] = (b[1] - b[0]) / 2.0
    cost[n:, m:] = 0.0
    candidates = np.unique(cost[np.isfinite(cost)])

    def feasible(t: float) -> bool:
        mat = csr_matrix((cost <= t).astype(np.int8))
        match = maximum_bipartite_matching(mat, perm_type="column")
        return bool((match >= 0).all())

    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def bottleneck_points(A, B) -> float:
    """L-infinity bottleneck distance between two point multisets, diagonal allowed.

    Points at infinite death can only match each other (sorted births is
    optimal in one dimension); unequal counts give an infinite distance.
    """
    A, B = _as_points(A), _as_points(B)
    ea = sorted(b for b, d in A if math.isinf(d))
    eb = sorted(b for b, d in B if math.isinf(d))
    if len(ea) != len(eb):
        return INF
    ess = max((abs(x - y) for x, y in zip(ea, eb)), default=0.0)
    fa = [p for p in A if not math.isinf(p[1])]
    fb = [p for p in B if not math.isinf(p[1])]
    return max(ess, _finite_bottleneck(fa, fb))


def bottleneck_distance(dgm_a: PersistenceDiagram, dgm_b: PersistenceDiagram, dimension: int) -> float:
    return bottleneck_points(dgm_a.points(dimension), dgm_b.points(dimension))


def cycle_is_valid(rep: Iterable[tuple[int, int]]) -> bool:
    deg: dict[int, int] = {}
    edges = list(rep)
    for a, b in edges:
        deg[a] = deg.get(a, 0) + 1
        deg[b] = deg.get(b, 0) + 1
    return bool(edges) and all(d % 2 == 0 for d in deg.values())
