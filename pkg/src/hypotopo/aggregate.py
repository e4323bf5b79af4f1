"""Hub-penalized weighted voting over skeleton nodes, plus loop verification."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .ghg import HypothesisGraph, HypothesisNode
from .relations import Relation, assignment, rule_label
from .skeleton import Skeleton
from .traces import extract_answer

TERMINAL = 1.0 - 1e-9
NO_ANSWER = "<no-answer>"
_NUM = re.compile(r"^[+-]?\d+(?:\.\d+)?$")


def normalize_answer(ans: str) -> str:
    s = ans.strip().lower().rstrip(".").strip()
    if _NUM.match(s):
        neg = s.startswith("-")
        s = s.lstrip("+-")
        whole, _, frac = s.partition(".")
        whole = whole.lstrip("0") or "0"
        frac = frac.rstrip("0")
        s = whole + ("." + frac if frac else "")
        if neg and s != "0":
            s = "-" + s
    return s


def node_answer(node: HypothesisNode, extractor: Callable[[str], str | None] = extract_answer) -> str | None:
    """Explicit answer field, else the extractor on terminal-progress nodes."""
    if node.answer:
        return normalize_answer(node.answer)
    if node.progress >= TERMINAL:
        got = extractor(node.text)
        return normalize_answer(got) if got else None
    return None


def vote_weight(confidence: float, degree: int, on_tour: bool = False, loop_lifespan: float = 0.0, persistence: bool = True) -> float:
    w = confidence / (1.0 + degree)
    if persistence and on_tour:
        w *= 1.0 + loop_lifespan
    return w


@dataclass
class VoteTally:
    weights: dict[str, float] = field(default_factory=dict)
    confidence: dict[str, float] = field(default_factory=dict)
    node_weights: dict[int, float] = field(default_factory=dict)
    voters: dict[str, list[int]] = field(default_factory=dict)
    winner: str = NO_ANSWER
    margin: float = 0.0
    fallback: bool = False

    @property
    def has_answer(self) -> bool:
        return self.winner != NO_ANSWER

    def ranking(self) -> list[tuple[str, float]]:
        order = sorted(self.weights, key=lambda a: (-round(self.weights[a], 12), -round(self.confidence[a], 12), a))
        return [(a, self.weights[a]) for a in order]

    def finalize(self) -> "VoteTally":
        ranked = self.ranking()
        if ranked:
            self.winner = ranked[0][0]
            self.margin = ranked[0][1] - (ranked[1][1] if len(ranked) > 1 else 0.0)
        return self

    def to_dict(self) -> dict:
        return {
            "winner": self.winner,
            "margin": self.margin,
            "weights": dict(sorted(self.weights.items())),
            "fallback": self.fallback,
        }


def tally_votes(votes: Sequence[tuple[int, str, float, float]]) -> VoteTally:
    """``votes`` holds (node_id, answer, weight, confidence) tuples."""
    t = VoteTally()
    for nid, ans, w, c in votes:
        t.weights[ans] = t.weights.get(ans, 0.0) + w
        t.confidence[ans] = t.confidence.get(ans, 0.0) + c
        t.voters.setdefault(ans, []).append(nid)
        t.node_weights[nid] = w
    return t.finalize()


def fallback_vote(graph: HypothesisGraph, extractor=extract_answer) -> VoteTally:
    """Confidence-weighted majority over the final step of every path."""
    finals: dict[int, int] = {}
    for walk in graph.walks.values():
        if walk:
            finals[walk[-1]] = finals.get(walk[-1], 0) + 1
    votes = []
    for nid in sorted(finals):
        node = graph.nodes[nid]
        raw = node.answer or extractor(node.text)
        if raw:
            ans = normalize_answer(raw)
            votes.append((nid, ans, node.confidence * finals[nid], node.confidence))
    t = tally_votes(votes)
    t.fallback = True
    return t


def aggregate_answers(skeletons: Sequence[Skeleton], graph: HypothesisGraph, persistence: bool = True, extractor=extract_answer) -> VoteTally:
    if not skeletons:
        return fallback_vote(graph, extractor)
    votes, seen = [], set()
    for sk in skeletons:
        for v in sk.path:
            if v in seen:
                continue
            seen.add(v)
            node = graph.nodes[v]
            ans = node_answer(node, extractor)
            if ans is None:
                continue
            w = vote_weight(node.confidence, sk.degree(v), sk.on_tour(v), sk.loop_lifespan, persistence)
            votes.append((v, ans, w, node.confidence))
    if not votes:
        return fallback_vote(graph, extractor)
    return tally_votes(votes)


def verify_with_loop(tally: VoteTally, skeleton: Skeleton, graph: HypothesisGraph, oracle=None) -> dict:
    """Advisory checks along a spliced loop; never changes the winner."""
    tour = list(dict.fromkeys(skeleton.tour))
    heads: dict[str, set[float]] = {}
    for v in tour:
        a = assignment(graph.nodes[v].canon)
        if a:
            heads.setdefault(a[0], set()).add(a[1])
    clashes = sorted(h for h, vals in heads.items() if len(vals) > 1)
    flags = {"numeric_consistent": not clashes, "numeric_clashes": clashes}
    voters = tally.voters.get(tally.winner, [])
    if not voters:
        flags["entailment"] = "unchecked"
        return flags
    wnode = max(voters, key=lambda n: (tally.node_weights[n], -n))
    items = [(graph.nodes[wnode].text, graph.nodes[wnode].canon, graph.nodes[v].text, graph.nodes[v].canon) for v in tour if v != wnode]
    try:
        codes = oracle.label(items) if oracle is not None else [rule_label(ca, cb) for _, ca, _, cb in items]
    except Exception:
        flags["entailment"] = "unchecked"
        return flags
    refuters = [v for v, c in zip([v for v in tour if v != wnode], codes) if Relation(c) is Relation.REFUTE]
    flags["entailment"] = "refuted" if refuters else "clean"
    flags["refuting_nodes"] = refuters
    return flags
