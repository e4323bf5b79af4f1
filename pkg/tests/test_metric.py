import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_instance
from hypotopo.ghg import build_graph
from hypotopo.metric import (
    MetricParams,
    NodeFeatures,
    bfs_depths,
    build_metric_space,
    distance_matrix,
    knn_graph_from_matrix,
    mixed_distance,
    nearest_rank,
    structural_raw,
    uncertainty,
    zscore_columns,
)
from hypotopo.providers import HashEmbedder
from hypotopo.relations import Relation, RelationTable


def test_params_validation():
    with pytest.raises(ValueError):
        MetricParams(alpha=0.5, beta=0.3, nu=0.1)
    with pytest.raises(ValueError):
        MetricParams(k=0)


def test_zscore_zero_variance_column_is_zero():
    x = np.array([[1.0, 5.0], [3.0, 5.0]])
    z = zscore_columns(x)
    assert z[:, 0].tolist() == [-1.0, 1.0]
    assert z[:, 1].tolist() == [0.0, 0.0]


@given(arrays(np.float64, (6, 3), elements=st.floats(-100, 100)))
def test_zscore_columns_standardized(x):
    z = zscore_columns(x)
    for c in range(3):
        if x[:, c].std() > 1e-6:
            assert z[:, c].mean() == pytest.approx(0, abs=1e-9)
            assert z[:, c].std() == pytest.approx(1, abs=1e-9)


def test_nearest_rank():
    vals = [5, 1, 4, 2, 3]
    assert nearest_rank(vals, 95) == 5
    assert nearest_rank(vals, 40) == 2
    assert nearest_rank(vals, 1) == 1
    with pytest.raises(ValueError):
        nearest_rank([], 50)


def test_structural_features_on_chain():
    g = build_graph(make_instance([["a", "b", "c", "d"]]))
    assert bfs_depths(g).tolist() == [0, 1, 2, 3]
    raw = structural_raw(g)
    assert raw[:, 1].tolist() == pytest.approx([0, 1 / 3, 2 / 3, 1])
    assert raw[:, 2].tolist() == pytest.approx([1 / 3, 2 / 3, 2 / 3, 1 / 3])


def _features(rng, n=6, D=4):
    sem = rng.normal(size=(n, D))
    sem /= np.linalg.norm(sem, axis=1, keepdims=True)
    return NodeFeatures(sem, rng.normal(size=(n, 3)), uncertainty(rng.uniform(0.1, 1, n)))


def test_matrix_matches_pairwise_definition(rng):
    f = _features(rng)
    rel = RelationTable({frozenset((0, 1)): Relation.REFUTE, frozenset((2, 3)): Relation.SUPPORT})
    D = distance_matrix(f, relations=rel)
    for i in range(6):
        for j in range(6):
            if i != j:
                assert D[i, j] == pytest.approx(mixed_distance(i, j, f, relations=rel))
    assert np.allclose(D, D.T)
    assert D[0, 1] > 1000


def test_knn_symmetric_truncated_and_deterministic_ties():
    D = np.ones((5, 5)) - np.eye(5)
    g = knn_graph_from_matrix(D, k=2, tau_percentile=100)
    # ties resolved by vertex id: i picks the two smallest other ids
    assert sorted(g.edges) == [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(12, 12))
    X = X + X.T
    g = knn_graph_from_matrix(X, k=3, tau_percentile=80)
    assert all(a < b for a, b in g.edges)
    assert all(w <= g.tau_value for w in g.edges.values())
    assert all(X[a, b] == w for (a, b), w in g.edges.items())
    assert knn_graph_from_matrix(X, k=50).k_used == 11


def test_build_metric_space_end_to_end():
    g = build_graph(make_instance([["a b", "c d", "x = 1"], ["a b", "e f", "x = 2"]]))
    ms = build_metric_space(g, HashEmbedder(16), MetricParams(k=3))
    assert ms.dist.shape == (len(g), len(g))
    assert np.allclose(np.linalg.norm(ms.features.semantic, axis=1), 1.0)


def test_mixed_distance_worked_examples():
    # cos = 0.5, L1 = 1.0, c = 0.9 for both, defaults; oracle is direct scalar evaluation
    sem = np.array([[1.0, 0.0], [0.5, np.sqrt(0.75)]])
    f = NodeFeatures(sem, np.array([[0.0, 0, 0], [1.0, 0, 0]]), uncertainty([0.9, 0.9]))
    expected = 0.6 * 0.5 + 0.3 * 1.0 + 0.1 * 2 * -np.log(0.9 + 1e-6)
    assert mixed_distance(0, 1, f) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.62107, abs=1e-5)
    rel = RelationTable({frozenset((0, 1)): Relation.REFUTE})
    assert mixed_distance(0, 1, f, relations=rel) == pytest.approx(expected + 1000, abs=1e-9)
    same = NodeFeatures(sem[[0, 0]], np.zeros((2, 3)), uncertainty([1.0, 1.0]))
    # u = -ln(1 + 1e-6) is slightly negative, so the raw total is -2e-7 and clamps to 0
    assert 0.0 <= mixed_distance(0, 1, same) <= 2.1e-7


@given(st.integers(0, 10_000))
def test_symmetry_rotation_and_relation_monotonicity(seed):
    rng = np.random.default_rng(seed)
    f = _features(rng, n=5)
    neutral = RelationTable({frozenset((0, 1)): Relation.NEUTRAL})
    assert np.array_equal(distance_matrix(f, relations=neutral), distance_matrix(f))
    for i in range(5):
        for j in range(5):
            assert mixed_distance(i, j, f) == mixed_distance(j, i, f)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    rot = NodeFeatures(f.semantic @ Q, f.structural, f.uncertainty)
    assert np.allclose(distance_matrix(rot), distance_matrix(f), atol=1e-12)
    from hypotopo.relations import RelationParams
    rel = RelationTable({frozenset((0, 1)): Relation.REFUTE})
    lo = distance_matrix(f, MetricParams(relation=RelationParams(M=10)), rel)
    hi = distance_matrix(f, MetricParams(relation=RelationParams(M=20)), rel)
    assert hi[0, 1] > lo[0, 1]
    mask = np.ones_like(lo, dtype=bool)
    mask[0, 1] = mask[1, 0] = False
    assert np.array_equal(lo[mask], hi[mask])


def test_knn_worked_examples():
    pts = np.array([0.0, 1.0, 3.0])
    D = np.abs(pts[:, None] - pts[None, :])
    assert knn_graph_from_matrix(D, k=1, tau_percentile=100).edges == {(0, 1): 1.0, (1, 2): 2.0}
    full = knn_graph_from_matrix(D, k=2, tau_percentile=100)
    assert len(full.edges) == 3
    assert nearest_rank(range(1, 21), 95) == 19


def test_knn_invariant_to_relabeling(rng):
    X = rng.uniform(size=(9, 9))
    X = X + X.T
    perm = rng.permutation(9)
    Y = X[np.ix_(perm, perm)]
    gx = knn_graph_from_matrix(X, k=3)
    gy = knn_graph_from_matrix(Y, k=3)
    mapped = {tuple(sorted((int(perm[a]), int(perm[b])))): w for (a, b), w in gy.edges.items()}
    assert mapped == gx.edges
