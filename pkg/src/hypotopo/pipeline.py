"""End-to-end construct-then-analyze pipeline for one instance or a batch."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregate import NO_ANSWER, VoteTally, aggregate_answers, normalize_answer, verify_with_loop
from .config import RunConfig
from .ghg import HypothesisGraph, SimilarityMode, build_graph, canonicalize
from .homology import PersistenceDiagram, build_filtration, compute_persistence, operating_scales, select_features
from .metric import MetricSpace, build_metric_space, compute_features
from .providers import RemoteRelationOracle, make_embedder
from .relations import RelationCache, RelationTable, RuleOracle, infer_relations
from .skeleton import LoopFeature, Skeleton, extract_skeletons
from .traces import ProblemInstance

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ["instance_id", "winner", "gold", "correct", "top_h1_lifespan"]


@dataclass
class InstanceResult:
    instance_id: str
    graph: HypothesisGraph
    relations: RelationTable
    space: MetricSpace
    diagram: PersistenceDiagram
    B0: list
    B1: list
    eps_h0: float
    skeletons: list[Skeleton]
    loops: list[LoopFeature]
    tally: VoteTally
    verification: list[dict] = field(default_factory=list)
    oracle_calls: int = 0  # every request to the budgeted oracle, verification included
    budget: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def winner(self) -> str:
        return self.tally.winner

    @property
    def top_h1_lifespan(self) -> float:
        cap = self.diagram.max_value
        return max((p.capped_lifespan(cap) for p in self.diagram.dim(1)), default=0.0)

    @property
    def correct(self) -> bool | None:
        gold = self.graph.gold_answer
        if gold is None:
            return None
        return self.winner != NO_ANSWER and self.winner == normalize_answer(gold)

    def report(self) -> dict:
        g = self.graph
        cap = self.diagram.max_value

        def num(x):
            return None if x is None or math.isinf(x) else x

        skeletons = []
        for sk in self.skeletons:
            lp = sk.cluster.principal_loop
            skeletons.append({
                "cluster": sk.cluster.index,
                "nodes": sk.path,
                "texts": [g.nodes[v].text for v in sk.path],
                "backbone": sk.cluster.backbone,
                "backbone_cost": sk.cluster.backbone_cost,
                "anchors": [sk.cluster.start, sk.cluster.goal],
                "spliced": sk.spliced,
                "pivot": sk.pivot,
                "tour": sk.tour,
                "stats": {
                    "contributing_paths": sk.contributing_paths,
                    "avg_edge_weight": sk.avg_edge_weight,
                    "loop_lifespan": sk.loop_lifespan,
                },
                "principal_loop": None if lp is None else lp.index,
            })
        return {
            "instance_id": self.instance_id,
            "winner": self.winner,
            "gold": g.gold_answer,
            "correct": self.correct,
            "tally": self.tally.to_dict(),
            "skeletons": skeletons,
            "loops": [
                {
                    "index": lp.index,
                    "birth": lp.pair.birth,
                    "death": num(lp.pair.death),
                    "lifespan": lp.lifespan,
                    "scale": lp.eps,
                    "support": lp.support,
                    "representative": lp.representative,
                    "cluster": lp.cluster,
                }
                for lp in self.loops
            ],
            "persistence": {
                "top_h1_lifespan": self.top_h1_lifespan,
                "n_h0": len(self.diagram.dim(0)),
                "n_h1": len(self.diagram.dim(1)),
                "selected_h0": len(self.B0),
                "selected_h1": len(self.B1),
                "eps_h0": self.eps_h0,
                "tau_value": self.diagram.tau_value,
                "h1_pairs": [[p.birth, num(p.death), p.capped_lifespan(cap)] for p in self.diagram.dim(1)],
            },
            "graph": {"nodes": len(g.nodes), "edges": len(g.edges)},
            "relations": {
                "candidates": self.relations.n_candidates,
                "chunks": self.relations.n_chunks,
                "labels": {c: sum(1 for v in self.relations.labels.values() if v.value == c) for c in ("SUPPORT", "REFUTE")},
            },
            "verification": self.verification,
            "oracle_calls": self.oracle_calls,
            "relation_requests": self.relations.oracle_calls,
            "budget": self.budget,
            "warnings": self.warnings,
        }

    def summary_row(self) -> dict:
        c = self.correct
        return {
            "instance_id": self.instance_id,
            "winner": self.winner,
            "gold": self.graph.gold_answer or "",
            "correct": "" if c is None else int(c),
            "top_h1_lifespan": f"{self.top_h1_lifespan:.10g}",
        }


def make_oracle(cfg: RunConfig):
    if cfg.relation_mode == "remote":
        return RemoteRelationOracle(budget=cfg.budget)
    return RuleOracle()


def make_embedder_from_config(cfg: RunConfig):
    return make_embedder(cfg.embed_mode, dim=cfg.embed_dim, path=cfg.embed_path or None,
                         **({"model": cfg.embed_model} if cfg.embed_mode == "remote" else {}))


def _merge_embeddings(inst: ProblemInstance, cfg: RunConfig, embedder):
    if SimilarityMode(cfg.similarity_mode) is SimilarityMode.CANON_JACCARD:
        return None
    canons = sorted({canonicalize(s.text) for p in inst.paths for s in p.steps})
    vecs = embedder.embed(canons)
    return dict(zip(canons, vecs))


def run_instance(inst: ProblemInstance, cfg: RunConfig, embedder=None, oracle=None, cache: RelationCache | None = None,
                 semantic_override: np.ndarray | None = None) -> InstanceResult:
    """Run the whole analysis for one instance.

    ``semantic_override`` replaces the node embeddings (used by perturbation
    experiments); it must be row-aligned with the built graph's nodes.
    """
    embedder = embedder or make_embedder_from_config(cfg)
    oracle = oracle if oracle is not None else make_oracle(cfg)
    if hasattr(oracle, "fresh"):
        oracle = oracle.fresh()
    graph = build_graph(inst, cfg.merge_policy(), _merge_embeddings(inst, cfg, embedder))
    relations = infer_relations(graph, oracle, cfg.relation_params(), cfg.epsilon_lat, cache)
    feats = compute_features(graph, embedder)
    if semantic_override is not None:
        feats.semantic = np.asarray(semantic_override, dtype=np.float64)
    space = build_metric_space(graph, embedder, cfg.metric_params(), relations, features=feats)
    filt = build_filtration(space.knn)
    dgm = compute_persistence(filt)
    dgm.tau_value = space.knn.tau_value
    B0, B1 = select_features(dgm, cfg.selection_policy())
    scales = operating_scales(B0, B1, space.knn.tau_value)
    warnings = []
    if scales.h0_fallback:
        warnings.append("no finite H0 death selected; cluster scale fell back to tau")
    skeletons, loops = extract_skeletons(
        graph, space.knn, space.dist, scales.eps_h0, B1, scales.eps_per_loop, cfg.splice_params(), dgm.max_value
    )
    if not skeletons:
        warnings.append("no cluster survived; fell back to terminal-node vote")
    tally = aggregate_answers(skeletons, graph, cfg.persistence_vote)
    verification = []
    for sk in skeletons:
        if sk.spliced:
            flags = verify_with_loop(tally, sk, graph, oracle if cfg.relation_mode == "remote" else None)
            flags["cluster"] = sk.cluster.index
            verification.append(flags)
    if relations.warnings:
        warnings.append(f"{relations.warnings} relation chunks degraded to NEUTRAL")
    if relations.over_budget_chunks:
        warnings.append(f"{relations.over_budget_chunks} relation chunks NEUTRAL by budget")
    return InstanceResult(
        instance_id=inst.instance_id,
        graph=graph,
        relations=relations,
        space=space,
        diagram=dgm,
        B0=B0,
        B1=B1,
        eps_h0=scales.eps_h0,
        skeletons=skeletons,
        loops=loops,
        tally=tally,
        verification=verification,
        oracle_calls=getattr(oracle, "calls", 0),
        budget=cfg.budget,
        warnings=warnings,
    )


@dataclass
class BatchOutcome:
    results: list[InstanceResult]
    errors: dict[str, str]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in sorted(self.results, key=lambda r: r.instance_id):
            w.writerow(r.summary_row())
        return buf.getvalue()


def run_batch(instances: Sequence[ProblemInstance], cfg: RunConfig, embedder=None, oracle=None, cache=None) -> BatchOutcome:
    """Each instance is isolated: a failure is recorded, not raised."""
    embedder = embedder or make_embedder_from_config(cfg)

    def one(inst):
        try:
            return inst.instance_id, run_instance(inst, cfg, embedder, oracle, cache), None
        except Exception as exc:
            log.exception("instance %s failed", inst.instance_id)
            return inst.instance_id, None, f"{type(exc).__name__}: {exc}"

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(one, instances))
    else:
        outs = [one(i) for i in instances]
    results = sorted((r for _, r, _ in outs if r is not None), key=lambda r: r.instance_id)
    errors = {iid: err for iid, _, err in outs if err is not None}
    return BatchOutcome(results, errors)


_SAFE = re.compile(r"[^A-Za-z0-9._-]+")


def report_filename(instance_id: str) -> str:
    return _SAFE.sub("_", instance_id) + ".json"


def dump_report(result: InstanceResult) -> str:
    return json.dumps(result.report(), sort_keys=True, indent=1)
