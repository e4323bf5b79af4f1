import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_instance
from hypotopo.ghg import MergePolicy, build_graph
from hypotopo.relations import (
    BudgetExhausted,
    Relation,
    RelationCache,
    RelationParams,
    RuleOracle,
    assignment,
    build_candidate_pairs,
    chunk_pairs,
    infer_relations,
    max_requests,
    relation_term,
    rule_label,
)


@pytest.mark.parametrize(
    "a, b, code",
    [
        ("x=4", "x=4", Relation.SUPPORT),
        ("x=4", "x=5", Relation.REFUTE),
        ("the total is 12", "the total is 13", Relation.REFUTE),
        ("x=4", "y=5", Relation.NEUTRAL),
        ("the number is even", "the number is odd", Relation.REFUTE),
        ("the claim holds", "the claim not holds", Relation.REFUTE),
        ("a b", "a b c", Relation.SUPPORT),
        ("a b", "c d", Relation.NEUTRAL),
    ],
)
def test_rule_table(a, b, code):
    assert rule_label(a, b) is code
    assert rule_label(b, a) is code


def test_assignment_parse():
    assert assignment("the sum is 7") == ("the sum", 7.0)
    assert assignment("x equals -2.5") == ("x", -2.5)
    assert assignment("= 4") is None
    assert assignment("no number") is None


def test_relation_term():
    p = RelationParams(M=1000, W=1)
    assert relation_term("REFUTE", p) == 1000
    assert relation_term(Relation.SUPPORT, p) == -1
    assert relation_term("NEUTRAL", p) == 0
    with pytest.raises(ValueError):
        RelationParams(chunk_size=0)


def _graph():
    inst = make_instance([["alpha one", "beta two", "x = 4"], ["gamma three", "delta four", "x = 5"]])
    return build_graph(inst, MergePolicy(theta_merge=1.1))


def test_candidate_pairs_cover_edges_and_lateral():
    g = _graph()
    cands = build_candidate_pairs(g, epsilon_lat=0.1)
    edges = {frozenset(p) for p in g.adjacency_pairs()}
    assert {frozenset(p) for p in cands.longitudinal} == edges
    nb = g.neighbors()
    for a, b in cands.lateral:
        assert b not in nb[a] and abs(g.nodes[a].progress - g.nodes[b].progress) < 0.1
    # every unconnected equal-progress pair is lateral
    expected = {
        (a, b) for a, b in itertools.combinations(range(len(g)), 2)
        if b not in nb[a] and abs(g.nodes[a].progress - g.nodes[b].progress) < 0.1
    }
    assert set(cands.lateral) == expected


@given(st.integers(0, 100), st.integers(1, 30))
def test_chunking_partitions(n, S):
    pairs = [(i, i + 1) for i in range(n)]
    chunks = chunk_pairs(pairs, S)
    assert [p for c in chunks for p in c] == pairs
    assert all(1 <= len(c) <= S for c in chunks)
    assert len(chunks) == max_requests(n, S)


def test_infer_relations_labels_conflicting_answers():
    g = _graph()
    table = infer_relations(g, RuleOracle())
    a = next(i for i, v in enumerate(g.nodes) if v.canon == "x=4")
    b = next(i for i, v in enumerate(g.nodes) if v.canon == "x=5")
    assert table.get(a, b) is Relation.REFUTE
    assert table.get(b, a) is Relation.REFUTE
    assert table.oracle_calls == 0


class CountingOracle:
    def __init__(self, budget=None, fail=False, short=False):
        self.calls, self.budget, self.fail, self.short = 0, budget, fail, short
        self.seen = []

    def label(self, items):
        if self.budget is not None and self.calls >= self.budget:
            raise BudgetExhausted()
        self.calls += 1
        self.seen.append(list(items))
        if self.fail:
            raise ConnectionError("down")
        codes = [rule_label(ca, cb) for _, ca, _, cb in items]
        return codes[:-1] if self.short else codes


def test_cache_round_trip_avoids_requests(tmp_path):
    g = _graph()
    path = tmp_path / "rel.jsonl"
    first = CountingOracle()
    t1 = infer_relations(g, first, cache=RelationCache(path))
    assert first.calls > 0
    second = CountingOracle()
    t2 = infer_relations(g, second, cache=RelationCache(path))
    assert second.calls == 0
    assert t1.labels == t2.labels


def test_failures_degrade_to_neutral_and_are_not_cached(tmp_path):
    g = _graph()
    cache = RelationCache(tmp_path / "c.jsonl")
    t = infer_relations(g, CountingOracle(fail=True), RelationParams(chunk_size=2), cache=cache)
    assert not t.labels and t.warnings == t.n_chunks
    assert not cache.table


def test_short_reply_padded_with_neutral():
    t = infer_relations(_graph(), CountingOracle(short=True), RelationParams(chunk_size=100))
    assert t.warnings == 1


def test_budget_caps_requests():
    g = _graph()
    oracle = CountingOracle(budget=2)
    t = infer_relations(g, oracle, RelationParams(chunk_size=1))
    assert oracle.calls == 2
    assert t.over_budget_chunks == t.n_chunks - 2
