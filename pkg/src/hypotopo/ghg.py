"""Global hypothesis graph: canonicalization, similarity-gated merging, edges."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .traces import ProblemInstance, ReasoningStep, effective_progress

_WS = re.compile(r"\s+")
_OPS = re.compile(r"\s*([+\-*/=^<>()])\s*")
_NUM = re.compile(r"(?<![\w.])(\d+)(?:\.(\d+))?(?![\w]|\.\d)")


def _norm_number(m: re.Match) -> str:
    whole = m.group(1).lstrip("0") or "0"
    frac = (m.group(2) or "").rstrip("0")
    return f"{whole}.{frac}" if frac else whole


def _canon_once(text: str) -> str:
    s = text.lower()
    s = _WS.sub(" ", s).strip()
    s = _NUM.sub(_norm_number, s)
    s = _OPS.sub(r"\1", s)
    return s


def canonicalize(text: str) -> str:
    """Normalize step text for equivalence testing.

    Lowercases, collapses whitespace, writes numerals in canonical decimal
    form and drops spacing around arithmetic operators.  Iterated to a fixed
    point so it is idempotent on any input.
    """
    s = _canon_once(text)
    for _ in range(8):
        nxt = _canon_once(s)
        if nxt == s:
            break
        s = nxt
    return s


class SimilarityMode(str, Enum):
    CANON_JACCARD = "canon_jaccard"
    EMBEDDING_COSINE = "embedding_cosine"
    BLEND = "blend"


class MergeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MergePolicy:
    theta_merge: float = 0.85
    similarity_mode: SimilarityMode = SimilarityMode.CANON_JACCARD
    blend_weight: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "similarity_mode", SimilarityMode(self.similarity_mode))
        if not 0.0 <= self.blend_weight <= 1.0:
            raise MergeConfigError("blend_weight must lie in [0, 1]")
        # theta may sit above 1 to disable merging entirely.
        if self.theta_merge < 0.0:
            raise MergeConfigError("theta_merge must be non-negative")


def jaccard(a: str, b: str) -> float:
    ta, tb = set(a.split()), set(b.split())
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def similarity(a: str, b: str, policy: MergePolicy = MergePolicy(), embeddings: Mapping[str, np.ndarray] | None = None) -> float:
    """Similarity of two canonical forms in [0, 1].

    ``embeddings`` maps canon strings to unit vectors and is needed for the
    cosine and blend modes; negative cosines are clipped to 0.
    """
    mode = policy.similarity_mode
    if mode is SimilarityMode.CANON_JACCARD:
        return jaccard(a, b)
    if embeddings is None:
        raise MergeConfigError(f"similarity mode {mode.value!r} needs embeddings")
    if a == b:
        cos = 1.0
    else:
        cos = float(np.clip(np.dot(embeddings[a], embeddings[b]), 0.0, 1.0))
    if mode is SimilarityMode.EMBEDDING_COSINE:
        return cos
    w = policy.blend_weight
    return w * cos + (1.0 - w) * jaccard(a, b)


class EdgeKind(str, Enum):
    ADJACENCY = "adjacency"
    SUPPORT = "support"
    REFUTE = "refute"


@dataclass
class HypothesisNode:
    node_id: int
    text: str
    canon: str
    confidence: float
    progress: float
    provenance: list[tuple[str, int]]
    answer: str | None = None
    # running sum keeps the merged confidence an exact mean over all sources
    conf_sum: float = 0.0
    source_confidences: list[float] = field(default_factory=list)

    @property
    def n_sources(self) -> int:
        return len(self.provenance)

    @property
    def path_ids(self) -> set[str]:
        return {pid for pid, _ in self.provenance}

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "text": self.text,
            "canon": self.canon,
            "confidence": self.confidence,
            "progress": self.progress,
            "provenance": [list(p) for p in self.provenance],
            "answer": self.answer,
        }


@dataclass(frozen=True)
class HypothesisEdge:
    src: int
    dst: int
    kind: EdgeKind = EdgeKind.ADJACENCY

    def to_dict(self) -> dict:
        return {"src": self.src, "dst": self.dst, "kind": self.kind.value}


@dataclass
class HypothesisGraph:
    instance_id: str
    nodes: list[HypothesisNode]
    edges: list[HypothesisEdge]
    # path_id -> node ids in step order
    walks: dict[str, list[int]] = field(default_factory=dict)
    question: str = ""
    gold_answer: str | None = None

    def __len__(self):
        return len(self.nodes)

    def neighbors(self) -> list[set[int]]:
        """Undirected simple neighbor sets (multi-edges and kinds collapsed)."""
        nb: list[set[int]] = [set() for _ in self.nodes]
        for e in self.edges:
            if e.src != e.dst:
                nb[e.src].add(e.dst)
                nb[e.dst].add(e.src)
        return nb

    def adjacency_pairs(self) -> list[tuple[int, int]]:
        seen, out = set(), []
        for e in self.edges:
            if e.kind is EdgeKind.ADJACENCY and (e.src, e.dst) not in seen:
                seen.add((e.src, e.dst))
                out.append((e.src, e.dst))
        return out

    def start_nodes(self) -> list[int]:
        return sorted({w[0] for w in self.walks.values() if w})

    def terminal_nodes(self) -> list[int]:
        return sorted({w[-1] for w in self.walks.values() if w})

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def merge_into(target: HypothesisNode, step: ReasoningStep, progress: float, source: tuple[str, int]) -> HypothesisNode:
    """Fold one more source step into ``target`` in place and return it.

    Confidence is the mean over every source, progress the max, provenance
    the union.  The representative text stays the first-seen one.
    """
    target.provenance.append(source)
    target.source_confidences.append(step.confidence)
    target.conf_sum += step.confidence
    target.confidence = min(1.0, max(0.0, target.conf_sum / len(target.provenance)))
    target.progress = max(target.progress, progress)
    if target.answer is None and step.answer:
        target.answer = step.answer
    return target


def _best_match(canon: str, nodes: Sequence[HypothesisNode], policy: MergePolicy, embeddings) -> tuple[int, float]:
    best, best_sim = -1, -1.0
    for node in nodes:
        sim = similarity(canon, node.canon, policy, embeddings)
        # strict '>' keeps the earliest node on ties
        if sim > best_sim:
            best, best_sim = node.node_id, sim
    return best, best_sim


def build_graph(instance: ProblemInstance, policy: MergePolicy = MergePolicy(), embeddings: Mapping[str, np.ndarray] | None = None) -> HypothesisGraph:
    """Stream every step of every path through the merge gate.

    Paths and steps are visited in file order.  A step joins its best-matching
    existing node when similarity exceeds ``theta_merge``; otherwise it opens
    a new node.  Consecutive steps of a path are joined by an adjacency edge.
    """
    nodes: list[HypothesisNode] = []
    edges: list[HypothesisEdge] = []
    walks: dict[str, list[int]] = {}
    for path in instance.paths:
        walk = []
        prev = None
        for j, step in enumerate(path.steps, start=1):
            canon = canonicalize(step.text)
            r = effective_progress(path, j)
            best, sim = _best_match(canon, nodes, policy, embeddings) if nodes else (-1, -1.0)
            if best < 0 or sim <= policy.theta_merge:
                node = HypothesisNode(
                    node_id=len(nodes),
                    text=step.text,
                    canon=canon,
                    confidence=step.confidence,
                    progress=r,
                    provenance=[(path.path_id, j)],
                    answer=step.answer or None,
                    conf_sum=step.confidence,
                    source_confidences=[step.confidence],
                )
                nodes.append(node)
            else:
                node = merge_into(nodes[best], step, r, (path.path_id, j))
            if prev is not None and prev != node.node_id:
                edges.append(HypothesisEdge(prev, node.node_id, EdgeKind.ADJACENCY))
            walk.append(node.node_id)
            prev = node.node_id
        walks[path.path_id] = walk
    return HypothesisGraph(
        instance_id=instance.instance_id,
        nodes=nodes,
        edges=edges,
        walks=walks,
        question=instance.question,
        gold_answer=instance.gold_answer,
    )
