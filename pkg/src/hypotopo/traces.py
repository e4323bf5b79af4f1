"""Problem instances and multi-path reasoning traces.

Trace files are line-delimited JSON, one problem per line::

    {"instance_id": ..., "question": ..., "gold_answer": ...,
     "paths": [{"path_id": ..., "steps": [{"text": ..., "confidence": ...,
                                          "answer": ..., "raw_progress": ...}]}]}

``gold_answer``, ``answer`` and ``raw_progress`` are optional.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable


class TraceFormatError(ValueError):
    """Raised for malformed trace records.  ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _unit_interval(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TraceFormatError(f"{name} must be a number, got {value!r}", field=name)
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise TraceFormatError(f"{name}={value} outside [0, 1]", field=name)
    return value


@dataclass(frozen=True)
class ReasoningStep:
    text: str
    confidence: float
    answer: str | None = None
    raw_progress: float | None = None

    def __post_init__(self):
        if not isinstance(self.text, str):
            raise TraceFormatError("text must be a string", field="text")
        object.__setattr__(self, "confidence", _unit_interval(self.confidence, "confidence"))
        if self.raw_progress is not None:
            object.__setattr__(self, "raw_progress", _unit_interval(self.raw_progress, "raw_progress"))
        if self.answer is not None and not isinstance(self.answer, str):
            raise TraceFormatError("answer must be a string", field="answer")

    def to_dict(self) -> dict:
        out = {"text": self.text, "confidence": self.confidence}
        if self.answer is not None:
            out["answer"] = self.answer
        if self.raw_progress is not None:
            out["raw_progress"] = self.raw_progress
        return out


@dataclass(frozen=True)
class ReasoningPath:
    path_id: str
    steps: tuple[ReasoningStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not isinstance(self.path_id, str) or not self.path_id:
            raise TraceFormatError("path_id must be a non-empty string", field="path_id")
        if not self.steps:
            raise TraceFormatError(f"path {self.path_id!r} has no steps", field="steps")

    def __len__(self):
        return len(self.steps)

    def to_dict(self) -> dict:
        return {"path_id": self.path_id, "steps": [s.to_dict() for s in self.steps]}


@dataclass(frozen=True)
class ProblemInstance:
    instance_id: str
    question: str
    paths: tuple[ReasoningPath, ...]
    gold_answer: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise TraceFormatError(f"instance {self.instance_id!r} has no paths", field="paths")
        ids = [p.path_id for p in self.paths]
        if len(set(ids)) != len(ids):
            raise TraceFormatError(f"duplicate path_id in instance {self.instance_id!r}", field="path_id")

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def to_dict(self) -> dict:
        out = {"instance_id": self.instance_id, "question": self.question}
        if self.gold_answer is not None:
            out["gold_answer"] = self.gold_answer
        out["paths"] = [p.to_dict() for p in self.paths]
        return out


def instance_from_dict(rec: dict) -> ProblemInstance:
    if not isinstance(rec, dict):
        raise TraceFormatError("record must be a JSON object")
    for key in ("instance_id", "question", "paths"):
        if key not in rec:
            raise TraceFormatError(f"missing field {key!r}", field=key)
    if not isinstance(rec["paths"], list):
        raise TraceFormatError("paths must be a list", field="paths")
    paths = []
    for p in rec["paths"]:
        if not isinstance(p, dict) or "path_id" not in p or "steps" not in p:
            raise TraceFormatError("path needs path_id and steps", field="paths")
        steps = []
        for s in p["steps"]:
            if not isinstance(s, dict) or "text" not in s or "confidence" not in s:
                raise TraceFormatError("step needs text and confidence", field="steps")
            steps.append(
                ReasoningStep(
                    text=s["text"],
                    confidence=s["confidence"],
                    answer=s.get("answer"),
                    raw_progress=s.get("raw_progress"),
                )
            )
        paths.append(ReasoningPath(path_id=str(p["path_id"]), steps=tuple(steps)))
    gold = rec.get("gold_answer")
    return ProblemInstance(
        instance_id=str(rec["instance_id"]),
        question=str(rec["question"]),
        paths=tuple(paths),
        gold_answer=None if gold is None else str(gold),
    )


def parse_trace_file(raw: bytes | str) -> list[ProblemInstance]:
    """Parse a line-delimited trace bundle.  Blank lines are skipped."""
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    out = []
    # split on "\n" only: str.splitlines would also break on U+0085 and
    # friends, which may legitimately appear inside JSON strings
    for lineno, line in enumerate(raw.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"invalid JSON ({exc.msg})", line=lineno) from exc
        try:
            out.append(instance_from_dict(rec))
        except TraceFormatError as exc:
            raise TraceFormatError(str(exc), line=lineno, field=exc.field) from exc
    return out


def serialize_traces(instances: Iterable[ProblemInstance]) -> bytes:
    lines = [json.dumps(inst.to_dict(), ensure_ascii=False, separators=(",", ":")) for inst in instances]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def read_traces(path) -> list[ProblemInstance]:
    with open(path, "rb") as fh:
        return parse_trace_file(fh.read())


def write_traces(path, instances: Iterable[ProblemInstance]) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_traces(instances))


def effective_progress(path: ReasoningPath, j: int) -> float:
    """Progress of step ``j`` (1-based): the trace's own value, else ``j / m``."""
    m = len(path.steps)
    if not 1 <= j <= m:
        raise IndexError(f"step index {j} outside 1..{m}")
    raw = path.steps[j - 1].raw_progress
    return raw if raw is not None else j / m


_BOXED = re.compile(r"\\boxed\{([^{}]*)\}")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def extract_answer(text: str) -> str | None:
    """Default answer extractor: last ``\\boxed{..}`` token, else last number."""
    boxed = _BOXED.findall(text)
    if boxed:
        return boxed[-1].strip()
    nums = _NUMBER.findall(text)
    return nums[-1] if nums else None
