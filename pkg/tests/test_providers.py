import numpy as np
import pytest

from hypotopo.providers import (
    FileEmbedder,
    HashEmbedder,
    ProviderError,
    RemoteEmbedder,
    RemoteRelationOracle,
    append_embedding_file,
    make_embedder,
    parse_codes,
)
from hypotopo.relations import Relation, RelationParams, canon_hash, infer_relations
from hypotopo.synth import SynthConfig, generate
from hypotopo.ghg import build_graph


def test_hash_embedder_unit_deterministic_nonnegative():
    e = HashEmbedder(64)
    v = e.embed(["x=4 plus one", "x=4 plus one", "totally different words", ""])
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(v[0], v[1])
    assert (v[0] @ v[2]) >= 0
    c0, c2 = e.counts("x=4 plus one"), e.counts("totally different words")
    assert v[0] @ v[2] == pytest.approx((c0 @ c2) / np.sqrt((c0 @ c0) * (c2 @ c2)))
    assert np.array_equal(HashEmbedder(64).embed(["abc"]), e.embed(["abc"]))


def test_file_embedder_round_trip(tmp_path):
    path = tmp_path / "emb.jsonl"
    append_embedding_file(path, {canon_hash("a"): np.array([3.0, 4.0]), canon_hash("b"): np.array([0.0, 2.0])})
    fe = make_embedder("file", path=path)
    assert np.allclose(fe.embed(["a", "b"]), [[0.6, 0.8], [0.0, 1.0]])
    with pytest.raises(KeyError):
        fe.embed(["missing"])


class Stub:
    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def __call__(self, url, body, key):
        self.requests.append(body)
        r = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(r, Exception):
            raise r
        return r(body) if callable(r) else r


def test_remote_embedder_retries_and_caches(tmp_path):
    cache = tmp_path / "c.jsonl"
    stub = Stub([ConnectionError("x"), lambda b: {"vectors": [[1.0, 1.0]] * len(b["inputs"])}])
    emb = RemoteEmbedder("http://stub", transport=stub, cache_path=cache, backoff=0)
    v = emb.embed(["a", "b", "a"])
    assert len(stub.requests) == 2 and stub.requests[1] == {"model": emb.model, "inputs": ["a", "b"]}
    again = RemoteEmbedder("http://stub", transport=Stub([AssertionError("no call expected")]), cache_path=cache)
    assert np.array_equal(again.embed(["a", "b", "a"]), v)
    dead = RemoteEmbedder("http://stub", transport=Stub([ConnectionError("down")]), backoff=0)
    with pytest.raises(ProviderError):
        dead.embed(["z"])


def test_parse_codes():
    codes, bad = parse_codes({"codes": ["support", " REFUTE", "maybe"]}, 4)
    assert codes == [Relation.SUPPORT, Relation.REFUTE, Relation.NEUTRAL, Relation.NEUTRAL]
    assert bad == 2
    assert parse_codes("garbage", 2) == ([Relation.NEUTRAL] * 2, 2)


def test_remote_oracle_budget_25_chunks():
    stub = Stub([lambda b: {"codes": ["SUPPORT"] * len(b["pairs"])}])
    oracle = RemoteRelationOracle("http://stub", budget=19, transport=stub, backoff=0)
    inst = generate(SynthConfig(seed=0, n_instances=1))[0]
    g = build_graph(inst)
    table = infer_relations(g, oracle, RelationParams(chunk_size=1))
    n_chunks = table.n_chunks
    assert n_chunks > 19
    assert oracle.calls == 19 == len(stub.requests)
    assert table.over_budget_chunks == n_chunks - 19
    assert all(set(r) == {"pairs"} and set(r["pairs"][0]) == {"a", "b"} for r in stub.requests)
    fresh = oracle.fresh()
    assert fresh.calls == 0 and fresh.budget == 19


def test_remote_oracle_exact_cap_arithmetic():
    stub = Stub([{"codes": ["NEUTRAL"]}])
    oracle = RemoteRelationOracle("http://stub", budget=19, transport=stub, backoff=0)
    from hypotopo.relations import BudgetExhausted

    made = 0
    for _ in range(25):
        try:
            oracle.label([("a", "a", "b", "b")])
            made += 1
        except BudgetExhausted:
            pass
    assert made == 19 and oracle.budget_exhausted


def test_remote_oracle_transport_failure_degrades_to_neutral():
    stub = Stub([ConnectionError("down")])
    oracle = RemoteRelationOracle("http://stub", transport=stub, backoff=0, attempts=3)
    g = build_graph(generate(SynthConfig(seed=0, n_instances=1))[0])
    table = infer_relations(g, oracle, RelationParams(chunk_size=1000))
    assert not table.labels and table.warnings == 1
    assert len(stub.requests) == 3


def test_missing_endpoint_is_an_error(monkeypatch):
    monkeypatch.delenv("RELATION_URL", raising=False)
    monkeypatch.delenv("EMBED_URL", raising=False)
    with pytest.raises(ProviderError):
        RemoteRelationOracle()
    with pytest.raises(ProviderError):
        RemoteEmbedder()
    with pytest.raises(ValueError):
        make_embedder("nope")
    assert isinstance(make_embedder("fallback"), HashEmbedder)
    assert FileEmbedder  # exported
