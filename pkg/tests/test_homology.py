import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import euclidean, random_sparse_graph, square_points
from hypotopo.homology import (
    PersistencePair,
    SelectionPolicy,
    bottleneck_distance,
    bottleneck_points,
    build_filtration,
    compute_persistence,
    cycle_is_valid,
    filtration_from_weights,
    h0_union_find,
    lower_median,
    operating_scales,
    select_dimension,
)
from hypotopo.metric import SparseMetricGraph
from oracles import brute_bottleneck, dense_persistence


def _lib_triples(g):
    dgm = compute_persistence(build_filtration(g))
    return sorted((p.dimension, p.birth, p.death) for p in dgm.pairs)


def _oracle_triples(g):
    return [t for t in dense_persistence(len(g.vertices), g.edges)]


@pytest.mark.parametrize("ties", [False, True])
def test_persistence_matches_dense_reduction(ties):
    rng = np.random.default_rng(7 if ties else 3)
    for _ in range(60):
        g = random_sparse_graph(rng, n_max=8, ties=ties)
        assert _lib_triples(g) == _oracle_triples(g)


def test_unit_square_has_one_loop():
    pts = square_points()
    d = euclidean(pts)
    weights = {(a, b): d[a, b] for a in range(4) for b in range(a + 1, 4) if d[a, b] < 1.2}
    dgm = compute_persistence(filtration_from_weights(4, weights))
    h1 = dgm.dim(1)
    assert len(h1) == 1 and h1[0].birth == pytest.approx(1.0) and h1[0].is_essential
    assert cycle_is_valid(h1[0].representative)
    assert h1[0].vertices() == [0, 1, 2, 3]
    # adding the diagonals fills the square
    full = {(a, b): d[a, b] for a in range(4) for b in range(a + 1, 4)}
    dgm = compute_persistence(filtration_from_weights(4, full))
    (loop,) = [p for p in dgm.dim(1) if p.lifespan > 0]
    assert (loop.birth, loop.death) == pytest.approx((1.0, math.sqrt(2)))
    assert sorted(p.death for p in dgm.dim(0)) == [1.0, 1.0, 1.0, math.inf]


def test_union_find_h0_agrees(rng):
    for _ in range(50):
        g = random_sparse_graph(rng, p_edge=0.5)
        f = build_filtration(g)
        lib = sorted((p.birth, p.death) for p in compute_persistence(f).dim(0))
        assert h0_union_find(f) == lib


def test_representatives_are_cycles(rng):
    for _ in range(50):
        g = random_sparse_graph(rng, n_max=8, p_edge=0.5)
        for p in compute_persistence(build_filtration(g)).dim(1):
            assert cycle_is_valid(p.representative)
            assert p.birth == max(g.edges[e] for e in p.representative)


def test_euler_characteristic_of_essential_classes(rng):
    for _ in range(30):
        g = random_sparse_graph(rng, n_max=8)
        f = build_filtration(g)
        dgm = compute_persistence(f)
        dims = f.dims()
        chi = dims.count(0) - dims.count(1) + dims.count(2)
        ess = [p for p in dgm.pairs if p.is_essential]
        # betti_0 - betti_1 + betti_2 == chi, with betti_2 the unpaired triangle count
        paired_tri = sum(1 for p in dgm.pairs if p.death_simplex is not None and len(p.death_simplex) == 3)
        b2 = dims.count(2) - paired_tri
        b0 = sum(1 for p in ess if p.dimension == 0)
        b1 = sum(1 for p in ess if p.dimension == 1)
        assert b0 - b1 + b2 == chi


points = st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)).map(lambda t: (min(t), max(t))), max_size=3)


@given(points, points)
def test_bottleneck_matches_brute_force(A, B):
    assert bottleneck_points(A, B) == pytest.approx(brute_bottleneck(A, B))


@given(points, points, points)
def test_bottleneck_metric_axioms(A, B, C):
    dab = bottleneck_points(A, B)
    assert bottleneck_points(A, A) == 0.0
    assert dab == pytest.approx(bottleneck_points(B, A))
    assert dab <= bottleneck_points(A, C) + bottleneck_points(C, B) + 1e-12


def test_bottleneck_essential_points():
    assert bottleneck_points([(0, math.inf)], [(0.5, math.inf)]) == 0.5
    assert bottleneck_points([(0, math.inf)], []) == math.inf


def test_stability_under_weight_perturbation(rng):
    for _ in range(50):
        g = random_sparse_graph(rng, n_max=7)
        noise = {e: w + rng.uniform(-0.05, 0.05) for e, w in g.edges.items()}
        shift = max(abs(noise[e] - g.edges[e]) for e in g.edges) if g.edges else 0.0
        h = SparseMetricGraph(g.vertices, noise, 0.0)
        a = compute_persistence(build_filtration(g))
        b = compute_persistence(build_filtration(h))
        for dim in (0, 1):
            assert bottleneck_distance(a, b, dim) <= shift + 1e-12


def _pair(b, d, dim=1, simplex=(0, 1)):
    return PersistencePair(dim, b, d, birth_simplex=simplex)


def test_selection_top_k_and_percent():
    pairs = [_pair(0, 1), _pair(0, 3), _pair(1, 1), _pair(0.5, 2.5), _pair(0, math.inf)]
    top = select_dimension(pairs, SelectionPolicy(K=2))
    assert [(p.birth, p.death) for p in top] == [(0, math.inf), (0, 3)]
    pct = select_dimension(pairs, SelectionPolicy(mode="top_q_percent", q=50))
    assert len(pct) == 2  # ceil(0.5 * 4 live pairs)
    assert all(p.lifespan > 0 for p in select_dimension(pairs, SelectionPolicy(K=10)))
    with pytest.raises(ValueError):
        SelectionPolicy(K=0)


def test_operating_scales():
    B0 = [_pair(0, d, dim=0) for d in (0.4, 0.1, 0.3, 0.2)] + [_pair(0, math.inf, dim=0)]
    B1 = [_pair(0.2, 0.5), _pair(0.3, math.inf)]
    sc = operating_scales(B0, B1, tau_value=0.9)
    assert sc.eps_h0 == 0.2 and not sc.h0_fallback
    assert sc.eps_per_loop == {0: pytest.approx(0.495), 1: pytest.approx(0.891)}
    fb = operating_scales([_pair(0, math.inf, dim=0)], [], tau_value=0.7)
    assert fb.eps_h0 == 0.7 and fb.h0_fallback
    assert lower_median([3, 1, 2, 4]) == 2


def test_h0_sum_rule(rng):
    from hypotopo.skeleton import components

    for _ in range(40):
        g = random_sparse_graph(rng, n_max=8, p_edge=0.4)
        h0 = compute_persistence(build_filtration(g)).dim(0)
        assert len(h0) == len(g.vertices)
        assert sum(p.is_essential for p in h0) == len(components(g.adjacency()))
