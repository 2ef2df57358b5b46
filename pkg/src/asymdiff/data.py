"""Synthetic data with a known labeling process, controllable missingness,
and CSV ingestion.

The generator draws a per-token weight for every vocabulary entry plus a
low-rank user-by-item interaction, scores each fully-observed row, and samples
the binary label from sigmoid(score / temperature). Missingness is injected
after labeling, so a masked evaluation set is noisy exactly the way serving
traffic is: the label was produced by features the model cannot see.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .features import (
    MISSING,
    MISSING_VALUE,
    FeatureField,
    FeatureSchema,
    SampleSet,
    SchemaBuilder,
    encode_sample,
    EncodeStats,
)

INTERACTION_RANK = 4
MISSING_MODES = ("none", "train", "eval", "both")


@dataclass(frozen=True)
class SynthSpec:
    """Fully determines one synthetic dataset (given its seed)."""

    n_users: int = 1000
    n_items: int = 300
    context_vocab_sizes: tuple[int, ...] = (30,) * 10
    n_train: int = 100_000
    n_eval: int = 20_000
    seed: int = 7
    temperature: float = 1.0
    rho: float = 0.2
    missing_mode: str = "eval"
    context_redundancy: float = 0.7

    def __post_init__(self):
        object.__setattr__(self, "context_vocab_sizes", tuple(int(v) for v in self.context_vocab_sizes))
        for name in ("n_users", "n_items", "n_train", "n_eval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if any(v < 1 for v in self.context_vocab_sizes):
            raise ConfigError("context_vocab_sizes entries must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        if not 0.0 <= self.context_redundancy <= 1.0:
            raise ConfigError(f"context_redundancy must be in [0, 1], got {self.context_redundancy}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.missing_mode not in MISSING_MODES:
            raise ConfigError(f"missing_mode must be one of {MISSING_MODES}, got {self.missing_mode!r}")

    @property
    def n_features(self) -> int:
        return 2 + len(self.context_vocab_sizes)  # user + item + context

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "context_vocab_sizes": list(self.context_vocab_sizes),
            "n_train": self.n_train,
            "n_eval": self.n_eval,
            "seed": self.seed,
            "temperature": self.temperature,
            "rho": self.rho,
            "missing_mode": self.missing_mode,
            "context_redundancy": self.context_redundancy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown synth spec fields: {sorted(extra)}")
        return cls(**{k: (tuple(v) if k == "context_vocab_sizes" else v) for k, v in d.items()})


def default_synth_spec() -> SynthSpec:
    return SynthSpec()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class GroundTruth:
    """The labeling process: per-token weights plus a low-rank user-item term.

    Row 0 of every table is zero, so scoring masked tokens is automatically
    observed-only scoring (the posterior-mean score under zero-mean weights).
    """

    weights: list  # per feature: [vocab_size] float64, entry 0 == 0
    user_vecs: np.ndarray  # [user_vocab, INTERACTION_RANK], row 0 == 0
    item_vecs: np.ndarray  # [item_vocab, INTERACTION_RANK], row 0 == 0
    temperature: float
    user_feature: int
    item_feature: int

    def score_tokens(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.atleast_2d(tokens)
        s = np.zeros(tokens.shape[0], dtype=np.float64)
        for f, w in enumerate(self.weights):
            s += w[tokens[:, f]]
        u = self.user_vecs[tokens[:, self.user_feature]]
        v = self.item_vecs[tokens[:, self.item_feature]]
        return s + (u * v).sum(axis=1)

    def prob(self, tokens: np.ndarray) -> np.ndarray:
        return _sigmoid(self.score_tokens(tokens) / self.temperature)

    def to_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "user_vecs": self.user_vecs.tolist(),
            "item_vecs": self.item_vecs.tolist(),
            "temperature": self.temperature,
            "user_feature": self.user_feature,
            "item_feature": self.item_feature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            weights=[np.asarray(w, dtype=np.float64) for w in d["weights"]],
            user_vecs=np.asarray(d["user_vecs"], dtype=np.float64),
            item_vecs=np.asarray(d["item_vecs"], dtype=np.float64),
            temperature=d["temperature"],
            user_feature=d["user_feature"],
            item_feature=d["item_feature"],
        )


@dataclass
class DatasetBundle:
    train: SampleSet
    eval: SampleSet
    schema: FeatureSchema
    truth: GroundTruth | None = None
    spec: SynthSpec | None = None
    # ground-truth scores of the eval rows before any missingness injection;
    # an information-theoretic ceiling for models that see the masked rows
    eval_oracle_scores: np.ndarray | None = None


def build_schema(spec: SynthSpec) -> FeatureSchema:
    fields = [
        FeatureField("user", (MISSING_VALUE,) + tuple(f"u{i}" for i in range(spec.n_users))),
        FeatureField("item", (MISSING_VALUE,) + tuple(f"i{i}" for i in range(spec.n_items))),
    ]
    for k, size in enumerate(spec.context_vocab_sizes):
        fields.append(FeatureField(f"c{k}", (MISSING_VALUE,) + tuple(f"c{k}_v{j}" for j in range(size))))
    user_vocab = fields[0].vocab  # user grouping key mirrors the user feature
    return FeatureSchema(features=tuple(fields), user_vocab=user_vocab, user_feature=0)


def generate(spec: SynthSpec) -> DatasetBundle:
    """Deterministic dataset from the generator seed; eval users always occur in train."""
    schema = build_schema(spec)
    n_feat = schema.n_features
    root = np.random.SeedSequence(spec.seed)
    k_weights, k_links, k_rows, k_labels, k_miss_train, k_miss_eval = root.spawn(6)

    rng_w = np.random.default_rng(k_weights)
    std = 1.0 / np.sqrt(n_feat)
    weights = []
    for size in schema.vocab_sizes:
        w = rng_w.normal(0.0, std, size)
        w[MISSING] = 0.0
        weights.append(w)
    user_vecs = rng_w.normal(0.0, 0.5, (schema.vocab_sizes[0], INTERACTION_RANK))
    item_vecs = rng_w.normal(0.0, 0.5, (schema.vocab_sizes[1], INTERACTION_RANK))
    user_vecs[MISSING] = 0.0
    item_vecs[MISSING] = 0.0
    truth = GroundTruth(
        weights=weights,
        user_vecs=user_vecs,
        item_vecs=item_vecs,
        temperature=spec.temperature,
        user_feature=0,
        item_feature=1,
    )

    # Each context slot is a noisy image of the item (even slots) or the user
    # (odd slots): with probability context_redundancy the token comes from a
    # fixed per-feature lookup of that entity, otherwise it is uniform. Masked
    # slots therefore stay partially recoverable from the surviving ones,
    # which is the serving regime the reverse process is meant to exploit.
    rng_links = np.random.default_rng(k_links)
    links = {}
    for f in range(2, n_feat):
        src = 1 if f % 2 == 0 else 0
        links[f] = (src, rng_links.integers(1, schema.vocab_sizes[f], schema.vocab_sizes[src]))

    rng_rows = np.random.default_rng(k_rows)
    n_total = spec.n_train + spec.n_eval
    tokens = np.zeros((n_total, n_feat), dtype=np.int32)
    tokens[: spec.n_train, 0] = rng_rows.integers(1, spec.n_users + 1, spec.n_train)
    train_users = np.unique(tokens[: spec.n_train, 0])
    tokens[spec.n_train :, 0] = train_users[rng_rows.integers(0, len(train_users), spec.n_eval)]
    tokens[:, 1] = rng_rows.integers(1, spec.n_items + 1, n_total)
    for f in range(2, n_feat):
        src, table = links[f]
        linked = rng_rows.random(n_total) < spec.context_redundancy
        uniform = rng_rows.integers(1, schema.vocab_sizes[f], n_total)
        tokens[:, f] = np.where(linked, table[tokens[:, src]], uniform)

    rng_labels = np.random.default_rng(k_labels)
    labels = (rng_labels.random(n_total) < truth.prob(tokens)).astype(np.int8)
    users = tokens[:, 0].copy()  # grouping key survives feature masking
    eval_oracle_scores = truth.score_tokens(tokens[spec.n_train :])

    train = SampleSet(labels=labels[: spec.n_train], users=users[: spec.n_train],
                      tokens=tokens[: spec.n_train], schema_hash=schema.hash())
    evl = SampleSet(labels=labels[spec.n_train :], users=users[spec.n_train :],
                    tokens=tokens[spec.n_train :], schema_hash=schema.hash())
    if spec.missing_mode in ("train", "both"):
        train = inject_missingness(train, spec.rho, np.random.default_rng(k_miss_train))
    if spec.missing_mode in ("eval", "both"):
        evl = inject_missingness(evl, spec.rho, np.random.default_rng(k_miss_eval))
    return DatasetBundle(train=train, eval=evl, schema=schema, truth=truth, spec=spec,
                         eval_oracle_scores=eval_oracle_scores)


def inject_missingness(sset: SampleSet, rho: float, rng: np.random.Generator) -> SampleSet:
    """Each feature slot independently becomes MISSING with probability rho; labels untouched."""
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must be in [0, 1], got {rho}")
    drop = rng.random(sset.tokens.shape) < rho
    tokens = np.where(drop, MISSING, sset.tokens)
    return SampleSet(labels=sset.labels.copy(), users=sset.users.copy(),
                     tokens=tokens.astype(np.int32), schema_hash=sset.schema_hash)


def split_by_user(sset: SampleSet, eval_frac: float, rng: np.random.Generator) -> tuple[SampleSet, SampleSet]:
    """User-stratified split; every user keeps at least one example in train."""
    if not 0.0 < eval_frac < 1.0:
        raise ConfigError(f"eval_frac must be in (0, 1), got {eval_frac}")
    eval_idx = []
    order = np.argsort(sset.users, kind="stable")
    bounds = np.flatnonzero(np.diff(sset.users[order])) + 1
    for grp in np.split(order, bounds):
        take = min(int(round(eval_frac * len(grp))), len(grp) - 1)
        if take > 0:
            eval_idx.append(rng.permutation(grp)[:take])
    eval_idx = np.sort(np.concatenate(eval_idx)) if eval_idx else np.array([], dtype=np.int64)
    mask = np.ones(len(sset), dtype=bool)
    mask[eval_idx] = False
    return sset.subset(np.flatnonzero(mask)), sset.subset(eval_idx)


# ---------------------------------------------------------------------------
# CSV and sidecar persistence
# ---------------------------------------------------------------------------

def write_csv(path, sset: SampleSet, schema: FeatureSchema, provenance: dict | None = None) -> None:
    """Write the dataset CSV; `provenance` key=value pairs go into a leading
    comment line (readers skip '#' lines), keeping the data columns pure."""
    if sset.schema_hash != schema.hash():
        raise DataError("sample set was encoded under a different schema")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in sorted(provenance.items())) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "user_id", *schema.feature_names()])
        user_vocab = schema.user_vocab
        vocabs = [f.vocab for f in schema.features]
        for i in range(len(sset)):
            row = [str(int(sset.labels[i])), user_vocab[sset.users[i]]]
            row.extend(vocabs[f][t] for f, t in enumerate(sset.tokens[i]))
            writer.writerow(row)


@dataclass
class IngestReport:
    n_rows: int = 0
    rejects: list = field(default_factory=list)  # "line N: reason" strings
    stats: EncodeStats = field(default_factory=EncodeStats)


def read_csv(path, schema: FeatureSchema | None = None,
             max_reject_frac: float = 0.01) -> tuple[SampleSet, FeatureSchema, IngestReport]:
    """Read a dataset CSV; build the schema from the file when none is given.

    Malformed rows are rejected with their line numbers; more than
    max_reject_frac of the rows rejected aborts the ingestion.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    numbered = [(i + 1, line) for i, line in enumerate(raw) if line.strip() and not line.startswith("#")]
    if not numbered:
        raise DataError(f"{path}: empty file")
    rows = list(csv.reader([line for _, line in numbered]))
    lines = [n for n, _ in numbered]
    header = rows[0]
    if len(header) < 3 or header[:2] != ["label", "user_id"]:
        raise DataError(f"{path}: header must start with label,user_id")
    feature_names = header[2:]
    report = IngestReport()

    if schema is None:
        builder = SchemaBuilder(feature_names)
        for line_no, row in zip(lines[1:], rows[1:]):
            try:
                builder.observe(row, line=line_no)
            except DataError:
                pass  # rejected again, with bookkeeping, in the encode pass
        schema = builder.finalize()
    elif list(schema.feature_names()) != feature_names:
        raise DataError(f"{path}: feature columns {feature_names} do not match the schema")

    samples = []
    for line_no, row in zip(lines[1:], rows[1:]):
        try:
            samples.append(encode_sample(row, schema, line=line_no, stats=report.stats))
        except DataError as err:
            report.rejects.append(f"line {line_no}: {err}")
    report.n_rows = len(rows) - 1
    if report.n_rows == 0:
        raise DataError(f"{path}: no data rows")
    if len(report.rejects) > max_reject_frac * report.n_rows:
        preview = "; ".join(report.rejects[:5])
        raise DataError(
            f"{path}: {len(report.rejects)} of {report.n_rows} rows rejected "
            f"(limit {max_reject_frac:.0%}): {preview}"
        )
    return SampleSet.from_samples(samples, schema), schema, report


def write_sidecar(path, spec: SynthSpec, schema: FeatureSchema, truth: GroundTruth | None,
                  extra: dict | None = None) -> None:
    """Provenance sidecar: generator settings, schema, and labeling process, canonical JSON."""
    doc = {
        "spec": spec.to_dict(),
        "schema": schema.to_dict(),
        "schema_hash": schema.hash(),
        "truth": truth.to_dict() if truth is not None else None,
    }
    doc.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_sidecar(path) -> tuple[SynthSpec, FeatureSchema, GroundTruth | None, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    spec = SynthSpec.from_dict(doc["spec"])
    schema = FeatureSchema.from_dict(doc["schema"])
    if schema.hash() != doc["schema_hash"]:
        raise DataError(f"{path}: schema hash mismatch (sidecar corrupted?)")
    truth = GroundTruth.from_dict(doc["truth"]) if doc.get("truth") is not None else None
    return spec, schema, truth, doc
