"""Validation statistics linking H1 persistence to answer correctness.

Spearman correlation, a one-feature logistic regression, Mann-Whitney ROC-AUC,
binned accuracy curves, boxplot quartiles, and the embedding-perturbation
stability experiment.
"""
from __future__ import annotations

import bisect
import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

# Reference values reported for proprietary LLM runs.  They are documentation
# only: synthetic corpora are not expected to reproduce them.
REFERENCE = {"spearman_rho": 0.349, "odds_ratio": 3.48, "auc": 0.74}


class DegenerateSampleError(ValueError):
    """Raised when a statistic is undefined for the given sample."""


@dataclass(frozen=True)
class LabeledSample:
    persistence: float
    correct: bool
    dataset_tag: str = "all"

    def __post_init__(self):
        if not (self.persistence >= 0) or math.isinf(self.persistence):
            raise ValueError(f"persistence must be finite and >= 0, got {self.persistence}")


def _xy(samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([s.persistence for s in samples], dtype=np.float64)
    y = np.array([1.0 if s.correct else 0.0 for s in samples])
    return x, y


# --- Spearman ---------------------------------------------------------------

def rank_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's rho with average ranks for ties (Pearson on the ranks)."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise DegenerateSampleError("need at least two paired observations")
    rx, ry = rankdata(x), rankdata(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sx, sy = float(np.sqrt(dx @ dx)), float(np.sqrt(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSampleError("correlation undefined: an input is constant")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def spearman(samples: Sequence[LabeledSample]) -> float:
    x, y = _xy(samples)
    return rank_correlation(x, y)


# --- logistic regression ----------------------------------------------------

@dataclass(frozen=True)
class LogisticFit:
    intercept: float
    coefficient: float
    converged: bool
    iterations: int

    @property
    def odds_ratio(self) -> float:
        return math.exp(self.coefficient) if self.coefficient < 700 else math.inf


def _check_classes(y: np.ndarray) -> None:
    if len(y) == 0:
        raise DegenerateSampleError("empty sample")
    if y.min() == y.max():
        label = "correct" if y[0] == 1.0 else "incorrect"
        raise DegenerateSampleError(f"only one class present: every sample is {label}")


def zscore(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return np.zeros_like(x) if sd == 0 else (x - x.mean()) / sd


def logistic_fit_xy(z: np.ndarray, y: np.ndarray, tol: float = 1e-8, max_iter: int = 100) -> LogisticFit:
    """Intercept + slope by iteratively reweighted least squares (Newton steps)."""
    z, y = np.asarray(z, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_classes(y)
    X = np.column_stack([np.ones_like(z), z])
    theta = np.zeros(2)
    for it in range(1, max_iter + 1):
        eta = X @ theta
        p = expit(eta)
        w = p * (1.0 - p)
        H = X.T @ (X * w[:, None])
        g = X.T @ (y - p)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(H, g, rcond=None)
        if not np.all(np.isfinite(step)):
            return LogisticFit(float(theta[0]), float(theta[1]), False, it)
        theta = theta + step
        if np.max(np.abs(step)) < tol:
            return LogisticFit(float(theta[0]), float(theta[1]), True, it)
    return LogisticFit(float(theta[0]), float(theta[1]), False, max_iter)


def logistic_fit_1d(samples: Sequence[LabeledSample], tol: float = 1e-8, max_iter: int = 100) -> LogisticFit:
    """Fit on z-scored persistence, so the slope is per standard deviation."""
    x, y = _xy(samples)
    return logistic_fit_xy(zscore(x), y, tol, max_iter)


def log_likelihood(z: np.ndarray, y: np.ndarray, intercept: float, slope: float) -> float:
    eta = intercept + slope * np.asarray(z)
    # log p = -log(1+e^-eta), log(1-p) = -log(1+e^eta)
    return float(np.sum(-y * np.logaddexp(0, -eta) - (1 - y) * np.logaddexp(0, eta)))


# --- ROC --------------------------------------------------------------------

def roc_auc_exact(scores: Sequence[float], labels: Sequence[bool]) -> Fraction:
    """Mann-Whitney AUC as an exact fraction: wins + ties/2 over all (pos, neg) pairs."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = sorted(s for s, l in zip(scores, labels) if not l)
    if not pos or not neg:
        raise DegenerateSampleError("AUC needs both correct and incorrect samples")
    credit = Fraction(0)
    for s in pos:
        below = bisect.bisect_left(neg, s)
        ties = bisect.bisect_right(neg, s) - below
        credit += below + Fraction(ties, 2)
    return credit / (len(pos) * len(neg))


def roc_auc(samples: Sequence[LabeledSample]) -> float:
    return float(roc_auc_exact([s.persistence for s in samples], [s.correct for s in samples]))


def roc_points(samples: Sequence[LabeledSample]) -> list[tuple[float, float, float]]:
    """(threshold, false-positive rate, true-positive rate), thresholds descending.

    Predict "correct" when persistence >= threshold.  The first point is
    (inf, 0, 0) and the last reaches (1, 1).
    """
    x, y = _xy(samples)
    _check_classes(y)
    P, N = y.sum(), len(y) - y.sum()
    pts = [(math.inf, 0.0, 0.0)]
    for t in sorted(set(x.tolist()), reverse=True):
        sel = x >= t
        pts.append((t, float(((1 - y) * sel).sum() / N), float((y * sel).sum() / P)))
    return pts


def trapezoid_auc(points: Sequence[tuple[float, float, float]]) -> float:
    return float(sum((b[1] - a[1]) * (a[2] + b[2]) / 2 for a, b in zip(points, points[1:])))


# --- binned curves and quartiles ---------------------------------------------

@dataclass(frozen=True)
class Bin:
    center: float
    lo: float
    hi: float
    accuracy: float  # nan for an empty bin
    count: int


def bin_curve(samples: Sequence[LabeledSample], n_bins: int = 10) -> list[Bin]:
    """Equal-width bins over the observed persistence range; the last bin is closed."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if not samples:
        return []
    x, y = _xy(samples)
    lo, hi = float(x.min()), float(x.max())
    width = (hi - lo) / n_bins
    idx = np.zeros(len(x), dtype=int) if width == 0 else np.minimum(((x - lo) / width).astype(int), n_bins - 1)
    out = []
    for b in range(n_bins):
        m = idx == b
        cnt = int(m.sum())
        out.append(Bin(lo + (b + 0.5) * width, lo + b * width, lo + (b + 1) * width,
                       float(y[m].mean()) if cnt else math.nan, cnt))
    return out


def quartiles(values: Sequence[float]) -> dict[str, float]:
    if len(values) == 0:
        return {"count": 0, "min": math.nan, "q1": math.nan, "median": math.nan, "q3": math.nan, "max": math.nan}
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"count": len(v), "min": float(v.min()), "q1": float(q1), "median": float(med), "q3": float(q3), "max": float(v.max())}


def boxplot_by_outcome(samples: Sequence[LabeledSample]) -> dict[str, dict[str, float]]:
    return {
        "correct": quartiles([s.persistence for s in samples if s.correct]),
        "incorrect": quartiles([s.persistence for s in samples if not s.correct]),
    }


def point_biserial(samples: Sequence[LabeledSample]) -> float:
    x, y = _xy(samples)
    if x.std() == 0 or y.std() == 0:
        raise DegenerateSampleError("correlation undefined: an input is constant")
    return float(np.corrcoef(x, y)[0, 1])


def per_dataset_auc(samples: Sequence[LabeledSample]) -> dict[str, float | None]:
    """AUC per dataset tag; None where a tag has a single outcome class."""
    tags: dict[str, list[LabeledSample]] = {}
    for s in samples:
        tags.setdefault(s.dataset_tag, []).append(s)
    out = {}
    for tag in sorted(tags):
        try:
            out[tag] = roc_auc(tags[tag])
        except DegenerateSampleError:
            out[tag] = None
    return out


# --- report -----------------------------------------------------------------

@dataclass
class StatsReport:
    n: int
    spearman_rho: float | None
    logistic_coefficient: float | None
    logistic_intercept: float | None
    odds_ratio: float | None
    converged: bool
    auc: float | None
    per_dataset_auc: dict[str, float | None]
    bins: list[Bin]
    boxplot: dict[str, dict[str, float]]
    backbone: str = ""
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bins"] = [asdict(b) for b in self.bins]
        return _json_safe(d)


def _json_safe(obj):
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def build_report(samples: Sequence[LabeledSample], n_bins: int = 10, backbone: str = "") -> StatsReport:
    warnings = []

    def attempt(fn):
        try:
            return fn(samples)
        except DegenerateSampleError as exc:
            warnings.append(f"{fn.__name__}: {exc}")
            return None

    rho = attempt(spearman)
    fit = attempt(logistic_fit_1d)
    auc = attempt(roc_auc)
    return StatsReport(
        n=len(samples),
        spearman_rho=rho,
        logistic_coefficient=None if fit is None else fit.coefficient,
        logistic_intercept=None if fit is None else fit.intercept,
        odds_ratio=None if fit is None else fit.odds_ratio,
        converged=bool(fit and fit.converged),
        auc=auc,
        per_dataset_auc=per_dataset_auc(samples),
        bins=bin_curve(samples, n_bins),
        boxplot=boxplot_by_outcome(samples),
        backbone=backbone,
        warnings=warnings,
    )


def dataset_tag(instance_id: str) -> str:
    return instance_id.split("/", 1)[0] if "/" in instance_id else "all"


def samples_from_summary(text: str) -> list[LabeledSample]:
    """Rows with an empty ``correct`` column (no gold answer) are skipped."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        if row.get("correct", "") == "":
            continue
        out.append(LabeledSample(float(row["top_h1_lifespan"]), row["correct"] in ("1", "True", "true"), dataset_tag(row["instance_id"])))
    return out


def read_summary(path) -> list[LabeledSample]:
    with open(path, encoding="utf-8") as fh:
        return samples_from_summary(fh.read())


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])


def write_stats_outputs(report: StatsReport, samples: Sequence[LabeledSample], out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "stats_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
    try:
        pts = roc_points(samples)
    except DegenerateSampleError:
        pts = []
    _write_csv(os.path.join(out_dir, "roc_points.csv"), ["threshold", "fpr", "tpr"], pts)
    _write_csv(os.path.join(out_dir, "bin_table.csv"), ["center", "lo", "hi", "accuracy", "count"],
               [(b.center, b.lo, b.hi, b.accuracy, b.count) for b in report.bins])
    _write_csv(os.path.join(out_dir, "boxplot.csv"), ["outcome", "count", "min", "q1", "median", "q3", "max"],
               [(k, v["count"], v["min"], v["q1"], v["median"], v["q3"], v["max"]) for k, v in report.boxplot.items()])


# --- perturbation stability -------------------------------------------------

@dataclass
class PerturbationSummary:
    sigma: float
    distances: list[float]
    min_selected_h1_lifespan: float
    max_distance: float
    stable: bool

    def to_dict(self) -> dict:
        return _json_safe(asdict(self))


def perturb_semantic(semantic: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Isotropic Gaussian noise whose expected norm is about ``sigma``, then re-normalize."""
    if sigma == 0:
        return semantic.copy()
    D = semantic.shape[1]
    noisy = semantic + rng.normal(0.0, sigma / math.sqrt(D), size=semantic.shape)
    norms = np.linalg.norm(noisy, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return noisy / norms


def perturb_and_compare(instance, sigma: float, seed: int = 0, trials: int = 5, cfg=None, embedder=None,
                        workers: int = 1, baseline=None) -> PerturbationSummary:
    """H1 bottleneck distance between the clean diagram and ``trials`` noisy ones."""
    from dataclasses import replace as dc_replace

    from .config import RunConfig
    from .homology import bottleneck_distance, build_filtration, compute_persistence
    from .metric import build_metric_space
    from .pipeline import make_embedder_from_config, run_instance

    cfg = cfg or RunConfig()
    embedder = embedder or make_embedder_from_config(cfg)
    base = baseline or run_instance(instance, cfg, embedder)
    cap = base.diagram.max_value
    lifespans = [p.capped_lifespan(cap) for p in base.B1]
    min_life = min(lifespans) if lifespans else math.inf
    feats = base.space.features
    seeds = np.random.SeedSequence([seed, int(round(sigma * 1e6))]).spawn(trials)

    def trial(ss) -> float:
        rng = np.random.default_rng(ss)
        noisy = dc_replace(feats, semantic=perturb_semantic(feats.semantic, sigma, rng))
        space = build_metric_space(base.graph, embedder, cfg.metric_params(), base.relations, features=noisy)
        dgm = compute_persistence(build_filtration(space.knn))
        return bottleneck_distance(base.diagram, dgm, 1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            dists = list(pool.map(trial, seeds))
    else:
        dists = [trial(s) for s in seeds]
    mx = max(dists, default=0.0)
    return PerturbationSummary(sigma, dists, min_life, mx, mx < min_life)
