"""Logical relations between hypothesis nodes.

Only a reduced candidate set is labeled: derivation edges (longitudinal) and
unconnected pairs at nearly the same progress (lateral).  Labels come from a
pluggable oracle; the default :class:`RuleOracle` is deterministic and offline.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Protocol, Sequence

from .ghg import HypothesisGraph

log = logging.getLogger(__name__)


class BudgetExhausted(RuntimeError):
    """Raised by a budgeted oracle once its request cap is reached."""


class Relation(str, Enum):
    SUPPORT = "SUPPORT"
    REFUTE = "REFUTE"
    NEUTRAL = "NEUTRAL"


@dataclass(frozen=True)
class RelationParams:
    M: float = 1000.0
    W: float = 1.0
    chunk_size: int = 20
    delta_logic: float = 1.0

    def __post_init__(self):
        if self.M <= 0 or self.W <= 0:
            raise ValueError("M and W must be positive")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.delta_logic < 0:
            raise ValueError("delta_logic must be non-negative")


@dataclass(frozen=True)
class CandidatePairSet:
    longitudinal: tuple[tuple[int, int], ...]
    lateral: tuple[tuple[int, int], ...]
    epsilon_lat: float = 0.1

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(self.longitudinal) + list(self.lateral)

    def __len__(self):
        return len(self.longitudinal) + len(self.lateral)


def build_candidate_pairs(graph: HypothesisGraph, epsilon_lat: float = 0.1) -> CandidatePairSet:
    longitudinal = []
    seen = set()
    for a, b in graph.adjacency_pairs():
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        longitudinal.append((a, b))
    nb = graph.neighbors()
    lateral = []
    n = len(graph.nodes)
    for a in range(n):
        ra = graph.nodes[a].progress
        for b in range(a + 1, n):
            if b in nb[a]:
                continue
            if abs(ra - graph.nodes[b].progress) < epsilon_lat:
                lateral.append((a, b))
    return CandidatePairSet(tuple(longitudinal), tuple(lateral), epsilon_lat)


def chunk_pairs(pairs: CandidatePairSet | Sequence[tuple[int, int]], S: int) -> list[list[tuple[int, int]]]:
    if S < 1:
        raise ValueError("chunk size must be >= 1")
    seq = pairs.pairs if isinstance(pairs, CandidatePairSet) else list(pairs)
    return [seq[i:i + S] for i in range(0, len(seq), S)]


def relation_term(code: Relation | str, params: RelationParams = RelationParams()) -> float:
    code = Relation(code)
    if code is Relation.REFUTE:
        return params.M
    if code is Relation.SUPPORT:
        return -params.W
    return 0.0


# --- rule-based oracle ------------------------------------------------------

_ASSIGN = re.compile(r"^(?P<head>.*?)\s*(?:=|\bis\b|\bequals\b)\s*(?P<val>-?\d+(?:\.\d+)?)\s*\.?$")

ANTONYMS = {
    ("true", "false"),
    ("even", "odd"),
    ("possible", "impossible"),
    ("increases", "decreases"),
    ("greater", "less"),
    ("positive", "negative"),
    ("valid", "invalid"),
    ("correct", "incorrect"),
    ("always", "never"),
}
_ANTONYM_WORDS = {w for pair in ANTONYMS for w in pair}


def assignment(canon: str) -> tuple[str, float] | None:
    """Split ``"<head> = <number>"`` (or ``is``/``equals``) into head and value."""
    m = _ASSIGN.match(canon)
    if not m or not m.group("head").strip():
        return None
    return m.group("head").strip(), float(m.group("val"))


def _polarity_clash(ta: list[str], tb: list[str]) -> bool:
    rest_a = [t for t in ta if t not in _ANTONYM_WORDS and t != "not"]
    rest_b = [t for t in tb if t not in _ANTONYM_WORDS and t != "not"]
    if rest_a != rest_b or not rest_a:
        return False
    marks_a = [t for t in ta if t in _ANTONYM_WORDS]
    marks_b = [t for t in tb if t in _ANTONYM_WORDS]
    if ("not" in ta) != ("not" in tb) and marks_a == marks_b:
        return True
    if len(marks_a) == len(marks_b) == 1:
        pair = (marks_a[0], marks_b[0])
        return pair in ANTONYMS or pair[::-1] in ANTONYMS
    return False


def rule_label(a: str, b: str) -> Relation:
    """Deterministic stand-in for an entailment model on two canon strings."""
    if a == b:
        return Relation.SUPPORT
    fa, fb = assignment(a), assignment(b)
    if fa and fb and fa[0] == fb[0] and fa[1] != fb[1]:
        return Relation.REFUTE
    ta, tb = a.split(), b.split()
    if _polarity_clash(ta, tb):
        return Relation.REFUTE
    sa, sb = set(ta), set(tb)
    if sa and sb and (sa <= sb or sb <= sa):
        return Relation.SUPPORT
    return Relation.NEUTRAL


class RelationOracle(Protocol):
    """Anything that labels a chunk of (text_a, canon_a, text_b, canon_b) pairs."""

    calls: int

    def label(self, items: Sequence[tuple[str, str, str, str]]) -> list[Relation]: ...


class RuleOracle:
    """Offline oracle.  Does not consume request budget."""

    def __init__(self):
        self.calls = 0
        self.budget_exhausted = False

    def label(self, items):
        return [rule_label(ca, cb) for _ta, ca, _tb, cb in items]


# --- label cache ------------------------------------------------------------

def canon_hash(canon: str) -> str:
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class RelationCache:
    """Append-only JSONL cache of ``{src_canon_hash, dst_canon_hash, code}``."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = path
        self.table: dict[tuple[str, str], Relation] = {}
        if path is not None and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self.table[(rec["src_canon_hash"], rec["dst_canon_hash"])] = Relation(rec["code"])

    def get(self, ca: str, cb: str) -> Relation | None:
        ha, hb = canon_hash(ca), canon_hash(cb)
        return self.table.get((ha, hb)) or self.table.get((hb, ha))

    def put_many(self, entries: Iterable[tuple[str, str, Relation]]) -> None:
        new = []
        for ca, cb, code in entries:
            key = (canon_hash(ca), canon_hash(cb))
            if key not in self.table:
                self.table[key] = code
                new.append({"src_canon_hash": key[0], "dst_canon_hash": key[1], "code": code.value})
        if self.path is not None and new:
            with open(self.path, "a", encoding="utf-8") as fh:
                for rec in new:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")


# --- assembly ---------------------------------------------------------------

@dataclass
class RelationTable:
    """Labels keyed by unordered node pair; missing pairs are NEUTRAL."""

    labels: dict[frozenset, Relation] = field(default_factory=dict)
    n_candidates: int = 0
    n_chunks: int = 0
    oracle_calls: int = 0
    warnings: int = 0
    over_budget_chunks: int = 0

    def get(self, i: int, j: int) -> Relation:
        return self.labels.get(frozenset((i, j)), Relation.NEUTRAL)

    def items(self):
        return self.labels.items()


@dataclass
class ChunkResult:
    labels: list[Relation]
    warnings: int = 0
    genuine: bool = True  # False when the labels are fallbacks, not oracle output
    over_budget: bool = False


def label_chunk(chunk: Sequence[tuple[int, int]], graph: HypothesisGraph, oracle) -> ChunkResult:
    """Label one chunk; any failure degrades the whole chunk to NEUTRAL."""
    items = [(graph.nodes[a].text, graph.nodes[a].canon, graph.nodes[b].text, graph.nodes[b].canon) for a, b in chunk]
    neutral = [Relation.NEUTRAL] * len(chunk)
    try:
        codes = list(oracle.label(items))
    except BudgetExhausted:
        return ChunkResult(neutral, 0, genuine=False, over_budget=True)
    except Exception as exc:  # transport or parsing failure
        log.warning("relation oracle failed on chunk of %d pairs: %s", len(chunk), exc)
        return ChunkResult(neutral, 1, genuine=False)
    warnings = 0
    if len(codes) != len(chunk):
        warnings += 1
        codes = (codes + neutral)[: len(chunk)]
    return ChunkResult([Relation(c) for c in codes], warnings)


def infer_relations(
    graph: HypothesisGraph,
    oracle,
    params: RelationParams = RelationParams(),
    epsilon_lat: float = 0.1,
    cache: RelationCache | None = None,
) -> RelationTable:
    cands = build_candidate_pairs(graph, epsilon_lat)
    pending = []
    table = RelationTable(n_candidates=len(cands))
    for a, b in cands.pairs:
        hit = cache.get(graph.nodes[a].canon, graph.nodes[b].canon) if cache else None
        if hit is None:
            pending.append((a, b))
        elif hit is not Relation.NEUTRAL:
            table.labels[frozenset((a, b))] = hit
    chunks = chunk_pairs(pending, params.chunk_size)
    table.n_chunks = len(chunks)
    calls_before = getattr(oracle, "calls", 0)
    fresh = []
    for chunk in chunks:
        res = label_chunk(chunk, graph, oracle)
        table.warnings += res.warnings
        table.over_budget_chunks += res.over_budget
        for (a, b), code in zip(chunk, res.labels):
            if a != b and code is not Relation.NEUTRAL:
                table.labels[frozenset((a, b))] = code
            if res.genuine:
                fresh.append((graph.nodes[a].canon, graph.nodes[b].canon, code))
    table.oracle_calls = getattr(oracle, "calls", 0) - calls_before
    if cache is not None:
        cache.put_many(fresh)
    return table


def max_requests(n_pairs: int, S: int) -> int:
    return math.ceil(n_pairs / S) if n_pairs else 0
