"""Synthetic trace bundles with planted answers and planted verification loops.

Every instance is built from a small *design graph*: a backbone chain of
steps ending in the planted answer, optionally split into two parallel
branches that diverge from one step and reconverge at a later one.  Each
design node owns a random pseudo-word key; a step's text lists the keys of
all design nodes within ``spread`` hops, so token overlap (and therefore the
embedding geometry) mirrors the design graph.  That is what gives a planted
branch-and-reconverge pattern a genuine one-dimensional hole in the metric.

Distractor paths use their own vocabulary and end in wrong answers.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from .traces import ProblemInstance, ReasoningPath, ReasoningStep

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

# Built-in paraphrase table.  Every entry is symmetric so repeated swaps stay
# inside the same synonym family.
SYNONYMS: dict[str, tuple[str, ...]] = {
    "derive": ("obtain", "deduce"),
    "obtain": ("derive", "deduce"),
    "deduce": ("derive", "obtain"),
    "then": ("next", "afterwards"),
    "next": ("then", "afterwards"),
    "afterwards": ("then", "next"),
    "therefore": ("thus", "hence"),
    "thus": ("therefore", "hence"),
    "hence": ("therefore", "thus"),
    "combine": ("join", "merge"),
    "join": ("combine", "merge"),
    "merge": ("combine", "join"),
    "check": ("verify", "confirm"),
    "verify": ("check", "confirm"),
    "confirm": ("check", "verify"),
}
_NUMERIC = re.compile(r"[-+]?\d")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_instances: int = 100
    n_paths: int = 3               # backbone paths sharing the planted chain
    backbone_len: int = 16         # steps per backbone path, answer step included
    n_distractors: int = 2
    noise: float = 0.0             # paraphrase swap rate applied to every path
    planted_loop: bool = True
    planted_answer: str | None = None   # None: a random integer per instance
    loop_start: int = 3            # backbone index where the branches split
    loop_len: int = 6              # steps on each branch
    spread: int = 2                # key-sharing radius in the design graph
    keys_per_node: int = 3         # pseudo-words owned by each design node
    weave: bool = False            # extra backbone paths alternate between the two branches
    distractor_len: int | None = None   # None: same as backbone_len
    backbone_confidence: float = 0.9
    distractor_confidence: float = 0.3
    confidence_spread: float = 0.05
    corrupt_answer: bool = False   # backbone ends in a wrong answer (gold stays planted)
    dataset: str = "synth"

    def __post_init__(self):
        if self.planted_loop and self.n_paths < 3:
            raise ValueError("a planted loop needs at least 3 backbone paths")
        if self.n_paths < 2:
            raise ValueError("at least 2 backbone paths are required")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if self.planted_loop and not (0 <= self.loop_start < self.backbone_len - 2):
            raise ValueError("loop_start must leave room for reconvergence before the answer")
        if self.loop_len < 1 or self.backbone_len < 3 or self.spread < 1:
            raise ValueError("loop_len >= 1, backbone_len >= 3 and spread >= 1 are required")


def _word(rng: np.random.Generator, used: set[str]) -> str:
    while True:
        syl = int(rng.integers(2, 4))
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syl))
        if w not in used and w not in SYNONYMS:
            used.add(w)
            return w


def _ball(adj: dict[int, set[int]], src: int, radius: int) -> list[int]:
    seen, frontier = {src}, [src]
    for _ in range(radius):
        nxt = []
        for u in frontier:
            for v in sorted(adj[u]):
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return sorted(seen)


def _design(cfg: SynthConfig) -> tuple[int, dict[int, set[int]], list[list[int]]]:
    """Design-graph node count, adjacency and the node sequence of each route.

    Nodes 0..L-1 are the backbone chain; with a loop, the segment strictly
    between ``loop_start`` and ``loop_start + 1`` is replaced by two branches
    (X then Y) of ``loop_len`` nodes each.
    """
    L = cfg.backbone_len
    if not cfg.planted_loop:
        routes = [list(range(L))]
        n = L
    else:
        s = cfg.loop_start
        head = list(range(s + 1))
        # every route stays L steps long: each branch replaces loop_len chain steps
        tail = list(range(s + 1 + cfg.loop_len, L))
        if not tail:
            raise ValueError("backbone too short for the requested loop")
        x = list(range(L, L + cfg.loop_len))
        y = list(range(L + cfg.loop_len, L + 2 * cfg.loop_len))
        routes = [head + x + tail, head + y + tail]
        n = L + 2 * cfg.loop_len
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for r in routes:
        for a, b in zip(r, r[1:]):
            adj[a].add(b)
            adj[b].add(a)
    used = {i for r in routes for i in r}
    adj = {i: nb for i, nb in adj.items() if i in used}
    return n, adj, routes


def _step_text(verb: str, keys: list[str]) -> str:
    return f"step: {verb} " + " ".join(keys)


def _answer_text(answer: str, keys: list[str]) -> str:
    return "therefore from " + " ".join(keys) + f" the answer is {answer}"


def _instance(cfg: SynthConfig, index: int, rng: np.random.Generator) -> ProblemInstance:
    used: set[str] = set()
    answer = cfg.planted_answer if cfg.planted_answer is not None else str(int(rng.integers(10, 1000)))
    final = answer
    if cfg.corrupt_answer:
        final = str(int(answer) + int(rng.integers(1, 50))) if answer.lstrip("-").isdigit() else answer + "x"

    _, adj, routes = _design(cfg)
    kp = cfg.keys_per_node
    keys = {i: [_word(rng, used) for _ in range(kp)] for i in sorted(adj)}
    verbs = ["derive", "combine", "check"]
    texts = {i: _step_text(verbs[i % 3], [w for j in _ball(adj, i, cfg.spread) for w in keys[j]]) for i in adj}

    def conf(base: float) -> float:
        return float(np.clip(base + rng.uniform(-cfg.confidence_spread, cfg.confidence_spread), 0.01, 1.0))

    paths = []
    for p in range(cfg.n_paths):
        if p < len(routes):
            route = routes[p]
        elif cfg.weave and len(routes) == 2:
            route = [routes[(j + p) % 2][j] for j in range(len(routes[0]))]
        else:
            route = routes[0]
        steps = []
        for j, node in enumerate(route):
            if j == len(route) - 1:
                steps.append(ReasoningStep(_answer_text(final, [w for k in _ball(adj, node, cfg.spread) for w in keys[k]]),
                                           conf(cfg.backbone_confidence), answer=final))
            else:
                steps.append(ReasoningStep(texts[node], conf(cfg.backbone_confidence)))
        paths.append(ReasoningPath(f"p{p}", tuple(steps)))

    wrong_used = {final, answer}
    for d in range(cfg.n_distractors):
        wrong = answer
        while wrong in wrong_used:
            wrong = str(int(rng.integers(10, 1000)))
        wrong_used.add(wrong)
        dl = cfg.distractor_len or cfg.backbone_len
        dkeys = [[_word(rng, used) for _ in range(kp)] for _ in range(dl)]
        dadj = {i: {j for j in (i - 1, i + 1) if 0 <= j < dl} for i in range(dl)}
        steps = []
        for j in range(dl):
            if j == dl - 1:
                steps.append(ReasoningStep(_answer_text(wrong, [w for i in _ball(dadj, j, cfg.spread) for w in dkeys[i]]),
                                           conf(cfg.distractor_confidence), answer=wrong))
            else:
                text = _step_text(verbs[j % 3], [w for i in _ball(dadj, j, cfg.spread) for w in dkeys[i]])
                steps.append(ReasoningStep(text, conf(cfg.distractor_confidence)))
        paths.append(ReasoningPath(f"d{d}", tuple(steps)))

    inst = ProblemInstance(
        instance_id=f"{cfg.dataset}/{index:05d}",
        question=f"synthetic problem {index}",
        paths=tuple(paths),
        gold_answer=answer,
    )
    if cfg.noise > 0:
        inst = perturb_paraphrase(inst, cfg.noise, int(rng.integers(2**31)))
    return inst


def generate(cfg: SynthConfig) -> list[ProblemInstance]:
    """Deterministic under ``cfg.seed``; each instance draws from its own child stream."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_instances)
    return [_instance(cfg, i, np.random.default_rng(s)) for i, s in enumerate(seeds)]


def generate_mixed(n: int, seed: int = 0, **overrides) -> list[ProblemInstance]:
    """Half planted-loop instances with correct answers, half loopless with corrupted answers.

    Instances alternate so any prefix stays roughly balanced.
    """
    good = SynthConfig(seed=seed, n_instances=(n + 1) // 2, planted_loop=True, dataset="loop", **overrides)
    bad = SynthConfig(seed=seed + 1, n_instances=n // 2, planted_loop=False, corrupt_answer=True, dataset="flat", **overrides)
    a, b = generate(good), generate(bad)
    out = []
    for i in range(max(len(a), len(b))):
        out.extend(x[i] for x in (a, b) if i < len(x))
    return out


# --- paraphrase perturbation ------------------------------------------------

def _swap_text(text: str, rate: float, rng: np.random.Generator) -> str:
    tokens = text.split(" ")
    out = []
    for tok in tokens:
        low = tok.lower()
        if _NUMERIC.search(tok) or low not in SYNONYMS:
            out.append(tok)
            continue
        if rng.random() < rate:
            choices = SYNONYMS[low]
            new = choices[int(rng.integers(len(choices)))]
            out.append(new.capitalize() if rng.random() < 0.5 else new)
        else:
            out.append(tok)
    sep = "  " if rate > 0 and rng.random() < rate else " "
    return sep.join(out)


def perturb_paraphrase(trace: ProblemInstance, rate: float, seed: int, confidence_jitter: float = 0.0) -> ProblemInstance:
    """Swap synonym tokens with probability ``rate``; numerals are never touched.

    ``confidence_jitter`` optionally re-scores each step's confidence with
    uniform noise of that half-width, modelling a model that assigns slightly
    different confidences to reworded steps.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    paths = []
    for path in trace.paths:
        steps = []
        for st in path.steps:
            text = _swap_text(st.text, rate, rng) if rate > 0 else st.text
            c = st.confidence
            if confidence_jitter > 0:
                c = float(np.clip(c + rng.uniform(-confidence_jitter, confidence_jitter), 0.01, 1.0))
            steps.append(replace(st, text=text, confidence=c))
        paths.append(replace(path, steps=tuple(steps)))
    return replace(trace, paths=tuple(paths))


def count_swappable(text: str) -> int:
    return sum(1 for t in text.split(" ") if t.lower() in SYNONYMS and not _NUMERIC.search(t) and len(SYNONYMS[t.lower()]) > 1)


def max_confidence_answer(trace: ProblemInstance) -> str | None:
    """Baseline: the final answer of the path with the highest mean step confidence.

    Ties go to the earlier path.
    """
    from .aggregate import normalize_answer
    from .traces import extract_answer

    best, best_c = None, -1.0
    for path in trace.paths:
        c = float(np.mean([s.confidence for s in path.steps]))
        if c > best_c:
            best_c = c
            last = path.steps[-1]
            ans = last.answer or extract_answer(last.text)
            best = normalize_answer(ans) if ans else None
    return best
