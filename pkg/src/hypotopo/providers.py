"""Embedding and relation-labeling providers.

Every provider has a deterministic offline path so the pipeline runs without
network access.  Remote clients speak small JSON-over-HTTP protocols:

* embeddings: ``{"model": str, "inputs": [str]}`` -> ``{"vectors": [[float]]}``
* relations:  ``{"pairs": [{"a": str, "b": str}]}`` -> ``{"codes": [str]}``

Endpoints and keys come from ``EMBED_URL``/``EMBED_KEY`` and
``RELATION_URL``/``RELATION_KEY``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.request
from typing import Callable, Sequence

import numpy as np

from .relations import BudgetExhausted, Relation, canon_hash

log = logging.getLogger(__name__)

Transport = Callable[[str, dict, "str | None"], dict]


class ProviderError(RuntimeError):
    pass


def http_post_json(url: str, body: dict, key: str | None = None, timeout: float = 30.0) -> dict:
    data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(url, data=data, method="POST", headers={"Content-Type": "application/json"})
    if key:
        req.add_header("Authorization", f"Bearer {key}")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


def _with_retries(fn, attempts: int, backoff: float):
    last = None
    for i in range(attempts):
        try:
            return fn()
        except Exception as exc:  # any transport failure is retried
            last = exc
            if i + 1 < attempts and backoff > 0:
                time.sleep(backoff * 2**i)
    raise ProviderError(f"request failed after {attempts} attempts: {last}") from last


def _unit(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ProviderError("zero vector cannot be normalized")
    return v / norm


# --- embeddings -------------------------------------------------------------

def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HashEmbedder:
    """Token hashing into ``dim`` integer count buckets, then one L2 normalization."""

    mode = "fallback"

    def __init__(self, dim: int = 64):
        self.dim = dim

    def counts(self, canon: str) -> np.ndarray:
        c = np.zeros(self.dim, dtype=np.int64)
        for tok in canon.split():
            c[_bucket(tok, self.dim)] += 1
        return c

    def embed(self, canons: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(canons), self.dim))
        for i, s in enumerate(canons):
            c = self.counts(s)
            if not c.any():
                # empty text still needs a unit vector
                c[_bucket("", self.dim)] = 1
            out[i] = c / np.sqrt(float((c * c).sum()))
        return out


def load_embedding_file(path) -> dict[str, np.ndarray]:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                table[rec["key"]] = np.asarray(rec["vector"], dtype=np.float64)
    return table


def append_embedding_file(path, items: dict[str, np.ndarray]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for key, vec in items.items():
            fh.write(json.dumps({"key": key, "vector": [float(x) for x in vec]}) + "\n")


class FileEmbedder:
    """Precomputed vectors keyed by canon hash (JSONL ``{"key", "vector"}``)."""

    mode = "file"

    def __init__(self, path):
        self.path = path
        self.table = load_embedding_file(path)
        dims = {len(v) for v in self.table.values()}
        self.dim = dims.pop() if len(dims) == 1 else None

    def embed(self, canons: Sequence[str]) -> np.ndarray:
        rows = []
        for s in canons:
            key = canon_hash(s)
            if key not in self.table:
                raise KeyError(f"no embedding for canon {s!r} (key {key})")
            rows.append(_unit(self.table[key]))
        return np.array(rows).reshape(len(canons), -1)


class RemoteEmbedder:
    """Batch client with an optional append-only JSONL cache."""

    mode = "remote"

    def __init__(self, url: str | None = None, key: str | None = None, model: str = "text-embedding-3-large",
                 cache_path=None, transport: Transport | None = None, attempts: int = 3, backoff: float = 0.5):
        self.url = url or os.environ.get("EMBED_URL")
        self.key = key or os.environ.get("EMBED_KEY")
        if not self.url:
            raise ProviderError("remote embedding needs EMBED_URL")
        self.model = model
        self.transport = transport or http_post_json
        self.attempts = attempts
        self.backoff = backoff
        self.cache_path = cache_path
        self.cache = load_embedding_file(cache_path) if cache_path and os.path.exists(cache_path) else {}
        self.requests = 0
        self._lock = threading.Lock()

    def embed(self, canons: Sequence[str]) -> np.ndarray:
        missing = sorted({s for s in canons if canon_hash(s) not in self.cache})
        if missing:
            body = {"model": self.model, "inputs": missing}
            resp = _with_retries(lambda: self.transport(self.url, body, self.key), self.attempts, self.backoff)
            vecs = resp.get("vectors") if isinstance(resp, dict) else None
            if not isinstance(vecs, list) or len(vecs) != len(missing):
                raise ProviderError("malformed embedding response")
            fresh = {canon_hash(s): _unit(v) for s, v in zip(missing, vecs)}
            with self._lock:
                self.requests += 1
                self.cache.update(fresh)
                if self.cache_path:
                    append_embedding_file(self.cache_path, fresh)
        return np.array([_unit(self.cache[canon_hash(s)]) for s in canons]).reshape(len(canons), -1)


# --- relations ----------------------------------------------------------------

def parse_codes(resp, n: int) -> tuple[list[Relation], int]:
    """Strictly map a response to ``n`` codes; anything unparseable is NEUTRAL."""
    codes = resp.get("codes") if isinstance(resp, dict) else None
    if not isinstance(codes, list):
        return [Relation.NEUTRAL] * n, n
    out, bad = [], 0
    for i in range(n):
        raw = codes[i] if i < len(codes) else None
        try:
            out.append(Relation(str(raw).strip().upper()))
        except ValueError:
            out.append(Relation.NEUTRAL)
            bad += 1
    return out, bad


class RemoteRelationOracle:
    """One request per chunk under a hard per-instance request cap."""

    def __init__(self, url: str | None = None, key: str | None = None, budget: int = 19,
                 transport: Transport | None = None, attempts: int = 3, backoff: float = 0.5):
        self.url = url or os.environ.get("RELATION_URL")
        self.key = key or os.environ.get("RELATION_KEY")
        if not self.url:
            raise ProviderError("remote relation labeling needs RELATION_URL")
        self.budget = budget
        self.transport = transport or http_post_json
        self.attempts = attempts
        self.backoff = backoff
        self.calls = 0
        self.bad_slots = 0
        self.budget_exhausted = False
        self._lock = threading.Lock()

    def fresh(self) -> "RemoteRelationOracle":
        """Same endpoint, zeroed counters (budgets are per instance)."""
        return RemoteRelationOracle(self.url, self.key, self.budget, self.transport, self.attempts, self.backoff)

    def _reserve(self) -> None:
        with self._lock:
            if self.calls >= self.budget:
                self.budget_exhausted = True
                raise BudgetExhausted(f"relation budget of {self.budget} requests used up")
            self.calls += 1

    def label(self, items):
        self._reserve()
        body = {"pairs": [{"a": ta, "b": tb} for ta, _ca, tb, _cb in items]}
        try:
            resp = _with_retries(lambda: self.transport(self.url, body, self.key), self.attempts, self.backoff)
        except ProviderError:
            log.warning("relation request failed; %d pairs fall back to NEUTRAL", len(items))
            raise
        codes, bad = parse_codes(resp, len(items))
        if bad:
            log.warning("%d unparseable relation codes mapped to NEUTRAL", bad)
            with self._lock:
                self.bad_slots += bad
        return codes


def make_embedder(mode: str, dim: int = 64, path=None, **kw):
    if mode == "fallback":
        return HashEmbedder(dim)
    if mode == "file":
        if path is None:
            raise ProviderError("file embedding mode needs a path")
        return FileEmbedder(path)
    if mode == "remote":
        return RemoteEmbedder(cache_path=path, **kw)
    raise ValueError(f"unknown embedding mode {mode!r}")
