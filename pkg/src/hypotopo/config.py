"""Run configuration: defaults < flat key=value config file < command-line flags."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

from .ghg import MergePolicy
from .homology import SelectionPolicy
from .metric import MetricParams
from .relations import RelationParams
from .skeleton import SpliceParams


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # graph construction
    theta_merge: float = 0.85
    similarity_mode: str = "canon_jaccard"
    blend_weight: float = 0.5
    # metric
    alpha: float = 0.6
    beta: float = 0.3
    nu: float = 0.1
    k: int = 15
    tau_percentile: float = 95.0
    # relations
    delta_logic: float = 1.0
    M: float = 1000.0
    W: float = 1.0
    S: int = 20
    epsilon_lat: float = 0.1
    budget: int = 19
    relation_mode: str = "rule"
    relation_cache: str = ""
    # topology
    selection_mode: str = "top_k"
    K: int = 5
    q: float = 20.0
    # skeleton and vote
    delta_loop: float = 0.15
    lam: float = 0.15
    persistence_vote: bool = True
    # providers
    embed_mode: str = "fallback"
    embed_dim: int = 64
    embed_path: str = ""
    embed_model: str = "text-embedding-3-large"
    # run
    seed: int = 0
    workers: int = 1

    # external key name -> field name
    ALIASES = {"lambda": "lam", "chunk_size": "S", "theta-merge": "theta_merge"}

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if abs(self.alpha + self.beta + self.nu - 1.0) > 1e-9:
            raise ConfigError(f"alpha+beta+nu must be 1 (got {self.alpha + self.beta + self.nu:.12g})")
        if self.embed_mode not in {"file", "remote", "fallback"}:
            raise ConfigError(f"embed_mode must be file, remote or fallback, not {self.embed_mode!r}")
        if self.relation_mode not in {"rule", "remote"}:
            raise ConfigError(f"relation_mode must be rule or remote, not {self.relation_mode!r}")
        if self.budget < 0 or self.workers < 1:
            raise ConfigError("budget must be >= 0 and workers >= 1")
        try:
            self.metric_params()
            self.selection_policy()
            self.splice_params()
            self.merge_policy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # --- typed views used by the pipeline ----------------------------------
    def relation_params(self) -> RelationParams:
        return RelationParams(M=self.M, W=self.W, chunk_size=self.S, delta_logic=self.delta_logic)

    def metric_params(self) -> MetricParams:
        return MetricParams(self.alpha, self.beta, self.nu, self.k, self.tau_percentile, self.relation_params())

    def merge_policy(self) -> MergePolicy:
        return MergePolicy(self.theta_merge, self.similarity_mode, self.blend_weight)

    def selection_policy(self) -> SelectionPolicy:
        return SelectionPolicy(self.selection_mode, self.K, self.q)

    def splice_params(self) -> SpliceParams:
        return SpliceParams(self.delta_loop, self.lam)

    # --- serialization ------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            val = getattr(self, f.name)
            lines.append(f"{key}={str(val).lower() if isinstance(val, bool) else val}")
        return "\n".join(lines) + "\n"

    def replace(self, **overrides) -> "RunConfig":
        return apply_overrides(self, overrides)


def _coerce(name: str, raw: Any, kind) -> Any:
    if not isinstance(raw, str):
        return raw
    try:
        if kind in (bool, "bool"):
            low = raw.strip().lower()
            if low in {"1", "true", "yes", "on"}:
                return True
            if low in {"0", "false", "no", "off"}:
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw.strip()


def _field_types() -> dict[str, Any]:
    return {f.name: f.type for f in fields(RunConfig)}


def apply_overrides(base: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    types = _field_types()
    vals = dataclasses.asdict(base)
    for key, raw in overrides.items():
        if raw is None:
            continue
        name = RunConfig.ALIASES.get(key, key).replace("-", "_")
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}")
        vals[name] = _coerce(name, raw, types[name])
    return RunConfig(**vals)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg = apply_overrides(cfg, parse_config_text(fh.read()))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
