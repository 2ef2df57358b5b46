"""Ranking metrics: AUC (tie-aware Mann-Whitney), user-grouped UAUC, log-loss,
and relative-improvement arithmetic, plus the report record runs emit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DataError, UndefinedMetricError
from .nn import SIGMOID_EPS
from .version import __version__


@dataclass(frozen=True)
class ScoredExample:
    user_id: int
    label: int
    score: float

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if not np.isfinite(self.score):
            raise DataError(f"score must be finite, got {self.score!r}")


def collate(examples: list[ScoredExample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(users, labels, scores) arrays from a list of ScoredExample."""
    users = np.array([e.user_id for e in examples], dtype=np.int64)
    labels = np.array([e.label for e in examples], dtype=np.int8)
    scores = np.array([e.score for e in examples], dtype=np.float64)
    return users, labels, scores


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = x.shape[0]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


def auc(labels, scores) -> float:
    """P(score+ > score-) + 0.5 * P(tie), via the midrank statistic."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ConfigError(f"auc: shape mismatch {labels.shape} vs {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise DataError("auc: scores must be finite")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auc undefined: need at least one positive and one negative")
    rank_sum = _midranks(scores)[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class UAUCResult:
    value: float
    n_users_scored: int
    n_users_skipped: int


def uauc(users, labels, scores) -> UAUCResult:
    """Per-user AUC averaged with weights = user example counts.

    Users with a single label class have no defined AUC; they are skipped and
    counted, not zero-filled.
    """
    users = np.asarray(users)
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if not (users.shape == labels.shape == scores.shape):
        raise ConfigError("uauc: users/labels/scores must have equal shapes")
    order = np.argsort(users, kind="stable")
    bounds = np.flatnonzero(np.diff(users[order])) + 1
    num = den = 0.0
    scored = skipped = 0
    for grp in np.split(order, bounds):
        y = labels[grp]
        if y.min() == y.max():
            skipped += 1
            continue
        num += len(grp) * auc(y, scores[grp])
        den += len(grp)
        scored += 1
    if den == 0:
        raise UndefinedMetricError("uauc undefined: no user has both label classes")
    return UAUCResult(value=float(num / den), n_users_scored=scored, n_users_skipped=skipped)


def relaimpr(metric_model: float, metric_base: float) -> float:
    """Relative improvement over the base metric, in percent."""
    if metric_base <= 0:
        raise ConfigError(f"relaimpr: base metric must be positive, got {metric_base}")
    return (metric_model / metric_base - 1.0) * 100.0


def logloss(labels, scores) -> float:
    """Mean cross-entropy with scores clamped into (0, 1)."""
    labels = np.asarray(labels, dtype=np.float64)
    p = np.clip(np.asarray(scores, dtype=np.float64), SIGMOID_EPS, 1.0 - SIGMOID_EPS)
    return float(-(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)).mean())


def evaluate_scores(users, labels, scores) -> dict:
    """All metric fields for one scored evaluation set."""
    u = uauc(users, labels, scores)
    return {
        "auc": auc(labels, scores),
        "uauc": u.value,
        "logloss": logloss(labels, scores),
        "n_examples": int(np.asarray(labels).shape[0]),
        "n_users_scored": u.n_users_scored,
        "n_users_skipped": u.n_users_skipped,
    }


CSV_COLUMNS = [
    "arm", "seed", "rho", "serving_path", "auc", "uauc", "logloss",
    "n_examples", "n_users_scored", "n_users_skipped", "oracle_auc",
    "relaimpr_auc", "relaimpr_uauc", "relaimpr_vs", "config_hash", "code_version",
]


@dataclass
class MetricsReport:
    """One evaluation outcome, serializable as canonical JSON or a sweep-CSV row."""

    arm: str
    seed: int
    auc: float
    uauc: float
    logloss: float
    n_examples: int
    n_users_scored: int
    n_users_skipped: int
    serving_path: str  # "serve_predict" or "base_predict"
    config_hash: str = ""
    code_version: str = __version__
    rho: float | None = None
    oracle_auc: float | None = None
    relaimpr: dict = field(default_factory=dict)  # baseline arm -> {"auc": pct, "uauc": pct}

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise ConfigError(f"auc out of [0, 1]: {self.auc}")
        if not 0.0 <= self.uauc <= 1.0:
            raise ConfigError(f"uauc out of [0, 1]: {self.uauc}")

    def with_baseline(self, name: str, base_auc: float, base_uauc: float) -> "MetricsReport":
        entries = dict(self.relaimpr)
        entries[name] = {"auc": relaimpr(self.auc, base_auc), "uauc": relaimpr(self.uauc, base_uauc)}
        out = MetricsReport(**{**asdict(self), "relaimpr": entries})
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def to_csv_row(self) -> list[str]:
        if "base" in self.relaimpr:
            vs = "base"
        else:
            vs = sorted(self.relaimpr)[0] if self.relaimpr else ""
        entry = self.relaimpr.get(vs, {})
        fmt = lambda v: "" if v is None or v == "" else repr(v) if isinstance(v, float) else str(v)
        values = {
            "arm": self.arm, "seed": self.seed, "rho": self.rho,
            "serving_path": self.serving_path, "auc": self.auc, "uauc": self.uauc,
            "logloss": self.logloss, "n_examples": self.n_examples,
            "n_users_scored": self.n_users_scored, "n_users_skipped": self.n_users_skipped,
            "oracle_auc": self.oracle_auc,
            "relaimpr_auc": entry.get("auc"), "relaimpr_uauc": entry.get("uauc"),
            "relaimpr_vs": vs, "config_hash": self.config_hash, "code_version": self.code_version,
        }
        return [fmt(values[c]) for c in CSV_COLUMNS]
