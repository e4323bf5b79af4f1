import numpy as np
import pytest

from conftest import make_instance, random_sparse_graph
from hypotopo.ghg import MergePolicy, build_graph
from hypotopo.homology import PersistencePair
from hypotopo.metric import SparseMetricGraph
from hypotopo.skeleton import (
    Cluster,
    LoopFeature,
    SpliceParams,
    assign_loops,
    choose_pivot,
    components,
    cross_distance,
    cycle_tour,
    dijkstra,
    extract_clusters,
    horton_candidates,
    localize_loop,
    minimum_cycle_basis,
    orient_tour,
    path_cost,
    rank_clusters,
    shortest_path,
    splice,
)
from oracles import all_simple_cycles, all_simple_paths, minimum_basis_weight


@pytest.mark.parametrize("ties", [False, True])
def test_dijkstra_matches_exhaustive_paths(ties):
    rng = np.random.default_rng(11 if ties else 12)
    for _ in range(40):
        adj = random_sparse_graph(rng, n_max=7, p_edge=0.5, ties=ties).adjacency()
        for s in adj:
            best = dijkstra(adj, s)
            for t in adj:
                if t == s:
                    continue
                paths = all_simple_paths(adj, s, t)
                if not paths:
                    assert t not in best
                    continue
                cost, path = best[t]
                assert cost == pytest.approx(min(path_cost(adj, p) for p in paths))
                if ties:  # quarter weights add exactly, so the tie-break is checkable
                    assert list(path) == min(paths, key=lambda p: (path_cost(adj, p), p))


def test_shortest_path_respects_allowed_set():
    adj = {0: {1: 1, 2: 5}, 1: {0: 1, 2: 1}, 2: {0: 5, 1: 1}}
    assert shortest_path(adj, 0, 2) == (2, [0, 1, 2])
    assert shortest_path(adj, 0, 2, allowed={0, 2}) == (5, [0, 2])
    assert shortest_path(adj, 0, 1, allowed={0, 2}) is None
    assert shortest_path(adj, 1, 1) == (0.0, [1])


@pytest.mark.parametrize("ties", [False, True])
def test_minimum_cycle_basis_matches_exhaustive(ties):
    rng = np.random.default_rng(21 if ties else 22)
    for _ in range(40):
        adj = random_sparse_graph(rng, n_max=7, p_edge=0.6, ties=ties).adjacency()
        basis = minimum_cycle_basis(adj)
        total, size = minimum_basis_weight(adj)
        assert len(basis) == size
        assert sum(w for w, _ in basis) == pytest.approx(total)
        cycles = all_simple_cycles(adj)
        for w, cyc in basis:
            edges = frozenset((min(a, b), max(a, b)) for a, b in zip(cyc, cyc[1:] + cyc[:1]))
            assert edges in cycles


def test_horton_candidates_are_simple_cycles(rng):
    adj = random_sparse_graph(rng, n_max=7, p_edge=0.8).adjacency()
    for w, cyc in horton_candidates(adj):
        assert len(set(cyc)) == len(cyc) >= 3
        assert w == pytest.approx(path_cost(adj, cyc + cyc[:1]))


def test_orient_tour():
    assert orient_tour([3, 1, 4, 2], 4) == [4, 1, 3, 2, 4]
    assert orient_tour([3, 1, 4, 2], 3) == [3, 1, 4, 2, 3]
    assert orient_tour([5, 9, 7], 5) == [5, 7, 9, 5]


def test_cross_distance_and_splice_threshold():
    dist = np.array([[0, 1, 2, 3], [1, 0, 0.05, 2], [2, 0.05, 0, 1], [3, 2, 1, 0]], dtype=float)
    assert cross_distance([2, 3], [0, 1], dist) == 0.05
    assert cross_distance([1, 3], [0, 1], dist) == 0.0
    with pytest.raises(ValueError):
        SpliceParams(lam=0.3)
    assert SpliceParams(0.15, 0.1).effective(1.0) == 0.1
    assert SpliceParams(0.15, 0.2).effective(5.0) == 0.15


def _loop_with_tail():
    # backbone 0-1-2-3 ; loop 1-4-5-1 attached at node 1
    adj = {0: {1: 1}, 1: {0: 1, 2: 1, 4: 1, 5: 1}, 2: {1: 1, 3: 1}, 3: {2: 1}, 4: {1: 1, 5: 1}, 5: {1: 1, 4: 1}}
    dist = np.ones((6, 6)) - np.eye(6)
    return adj, dist


def test_splice_reroutes_through_loop():
    adj, dist = _loop_with_tail()
    res = splice([0, 1, 2, 3], [1, 4, 5], 1, adj, dist, SpliceParams(), eps_b=1.0)
    assert res.spliced
    assert res.path == [0, 1, 4, 5, 1, 2, 3]
    far = splice([0, 1, 2, 3], [4, 5], 1, adj, dist, SpliceParams(), eps_b=1.0)
    assert not far.spliced and far.path == [0, 1, 2, 3]


def test_splice_pivot_off_tour_uses_link():
    adj, dist = _loop_with_tail()
    dist[4, 2] = dist[2, 4] = 0.01
    res = splice([0, 1, 2, 3], [4, 5, 1], 0, adj, dist, SpliceParams(), eps_b=1.0)
    assert res.spliced
    # start -> pivot -> link -> tour -> link back -> pivot -> goal
    assert res.path == [0, 1, 4, 5, 1, 0, 1, 2, 3]


def test_clusters_and_anchors():
    inst = make_instance([["s a", "m b", "g c", "h d"], ["s a", "m e", "g f", "h d"], ["lone x", "lone y"]])
    g = build_graph(inst, MergePolicy())
    adj = {v: {} for v in range(len(g))}
    for a, b in g.adjacency_pairs():
        adj[a][b] = adj[b][a] = 1.0
    clusters = extract_clusters(adj, g)
    assert len(clusters) == 1
    (c,) = clusters
    assert c.path_ids == ["p0", "p1"]
    assert g.nodes[c.start].canon == "s a" and g.nodes[c.goal].canon == "h d"
    assert components(adj)[0] == c.members


def test_localize_and_assign_loops():
    edges = {(0, 1): 0.2, (1, 2): 0.2, (2, 3): 0.2, (0, 3): 0.5, (3, 4): 0.1}
    metric = SparseMetricGraph(list(range(5)), edges, 0.5)
    rep = ((0, 1), (0, 3), (1, 2), (2, 3))
    pair = PersistencePair(1, 0.5, 0.9, representative=rep)
    assert localize_loop(pair, metric, 0.5) == [0, 1, 2, 3]
    assert localize_loop(PersistencePair(1, 0.5, 0.9), metric, 0.5) is None
    tour, w = cycle_tour([0, 1, 2, 3], metric, 0.5, [0, 1, 2, 3])
    assert sorted(tour) == [0, 1, 2, 3] and w == pytest.approx(1.1)
    c1 = Cluster(0, [0, 1, 2], 0, 2, ["a", "b"])
    c2 = Cluster(1, [3, 4, 5, 6, 7], 3, 7, ["a", "b"])
    lps = [LoopFeature(0, pair, 0.5, 0.4, [0, 1, 2, 3], [0, 1, 2, 3]), LoopFeature(1, pair, 0.5, 0.1, [5, 6], [5, 6])]
    assign_loops(lps, [c1, c2])
    assert lps[0].cluster == 0 and lps[1].cluster == 1
    assert c1.principal_loop is lps[0]
    assert [c.index for c in rank_clusters([c2, c1])] == [0, 1]
    progress = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    assert choose_pivot([0, 1, 2, 3], [0, 1, 2, 3, 4], progress) == 2


def test_splice_monotone_in_delta():
    adj, dist = _loop_with_tail()
    dist[4, 2] = dist[2, 4] = 0.12
    results = [splice([0, 1, 2, 3], [4, 5], 1, adj, dist, SpliceParams(delta_loop=d, lam=0.2), eps_b=1.0).spliced
               for d in (0.05, 0.1, 0.13, 0.15, 0.3)]
    assert results == [False, False, True, True, True]


def test_rank_clusters_total_order():
    import itertools as it

    pair = PersistencePair(1, 0.1, 0.5)
    clusters = []
    for i, (life, size, cost) in enumerate([(None, 5, 1.0), (0.5, 4, 2.0), (0.3, 6, 1.0), (0.5, 4, 1.5), (None, 7, 0.5), (None, 5, 0.9)]):
        c = Cluster(i, list(range(size)), 0, size - 1, ["a", "b"], backbone_cost=cost)
        if life is not None:
            c.principal_loop = LoopFeature(0, pair, 0.4, life, [0, 1, 2], [0, 1, 2])
        clusters.append(c)
    order = [c.index for c in rank_clusters(clusters)]
    assert order == [3, 1, 2, 4, 5, 0]
    for perm in it.islice(it.permutations(clusters), 50):
        assert [c.index for c in rank_clusters(perm)] == order


def test_skeletons_on_synthetic_corpus_are_valid_walks():
    from hypotopo.config import RunConfig
    from hypotopo.pipeline import run_instance
    from hypotopo.synth import SynthConfig, generate

    spliced = 0
    for inst in generate(SynthConfig(seed=4, n_instances=8)):
        res = run_instance(inst, RunConfig())
        for sk in res.skeletons:
            assert sk.path[0] == sk.cluster.start and sk.path[-1] == sk.cluster.goal
            for a, b in zip(sk.path, sk.path[1:]):
                assert b in sk.adj[a]
            if sk.spliced:
                spliced += 1
                assert set(sk.tour) <= set(sk.path)
                assert sk.pivot in sk.cluster.principal_loop.support
    assert spliced > 0
