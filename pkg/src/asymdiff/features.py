"""Feature schema, sample encoding, and the discrete forward process.

A sample holds N categorical token slots. Index 0 of every vocabulary is the
reserved MISSING token; its embedding is learned, so training-time dropout and
serving-time missingness are literally the same representation. The forward
process drops T distinct observed features by overwriting their tokens with
MISSING, and the resulting step mask (1 = missing) conditions the denoiser.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

MISSING = 0  # reserved token index in every feature vocabulary
MISSING_VALUE = ""  # CSV representation of a missing cell


@dataclass(frozen=True)
class FeatureField:
    """One categorical feature: name plus its full vocabulary.

    vocab[0] is always the MISSING sentinel; token id == vocabulary index.
    """

    name: str
    vocab: tuple[str, ...]

    def __post_init__(self):
        if len(self.vocab) < 2:
            raise ConfigError(f"feature '{self.name}': vocabulary needs MISSING plus at least one token")
        if self.vocab[0] != MISSING_VALUE:
            raise ConfigError(f"feature '{self.name}': vocab[0] must be the MISSING sentinel")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature descriptors plus the user-id vocabulary.

    `user_feature` points at the feature that mirrors user identity (used by
    the synthetic generator's ground truth); None when no feature carries it.
    The user_id grouping key has its own vocabulary because it must survive
    missingness injected into feature slots.
    """

    features: tuple[FeatureField, ...]
    user_vocab: tuple[str, ...]
    user_feature: int | None = None

    def __post_init__(self):
        if not self.features:
            raise ConfigError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("feature names must be unique")
        if self.user_vocab[:1] != (MISSING_VALUE,):
            raise ConfigError("user_vocab[0] must be the MISSING sentinel")
        if self.user_feature is not None and not (0 <= self.user_feature < len(self.features)):
            raise ConfigError(f"user_feature index {self.user_feature} out of range")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def vocab_sizes(self) -> tuple[int, ...]:
        return tuple(f.vocab_size for f in self.features)

    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def to_dict(self) -> dict:
        return {
            "features": [{"name": f.name, "vocab": list(f.vocab)} for f in self.features],
            "user_vocab": list(self.user_vocab),
            "user_feature": self.user_feature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            features=tuple(FeatureField(f["name"], tuple(f["vocab"])) for f in d["features"]),
            user_vocab=tuple(d["user_vocab"]),
            user_feature=d["user_feature"],
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def token_maps(self) -> list[dict]:
        """Per-feature value -> token index maps (cached)."""
        maps = getattr(self, "_token_maps", None)
        if maps is None:
            maps = [{v: i for i, v in enumerate(f.vocab)} for f in self.features]
            object.__setattr__(self, "_token_maps", maps)
        return maps

    def user_map(self) -> dict:
        m = getattr(self, "_user_map", None)
        if m is None:
            m = {v: i for i, v in enumerate(self.user_vocab)}
            object.__setattr__(self, "_user_map", m)
        return m


@dataclass(frozen=True)
class Sample:
    """One labeled example: y in {0,1}, a user-id token, and N feature tokens."""

    label: int
    user_id: int
    features: tuple[int, ...]

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")


def mask_from_observed(x: Sample | np.ndarray) -> np.ndarray:
    """Step mask of naturally-missing slots: bit f is set iff slot f is MISSING."""
    tokens = np.asarray(x.features if isinstance(x, Sample) else x)
    return tokens == MISSING


def sample_T(rng: np.random.Generator, n: int, size: int | None = None):
    """Draw the step count T uniformly from {0, 1, ..., n} inclusive."""
    if n < 1:
        raise ConfigError(f"sample_T: need n >= 1, got {n}")
    if size is None:
        return int(rng.integers(0, n + 1))
    return rng.integers(0, n + 1, size=size)


def forward_process(x0: Sample, T: int, rng: np.random.Generator) -> tuple[Sample, np.ndarray]:
    """Drop T distinct observed features from x0, returning (x_T, step mask).

    The mask is the union of the dropped slots and the slots already missing
    in x0. If T exceeds the number of droppable slots, all of them are dropped
    (the caller records the clamp).
    """
    n = len(x0.features)
    if not (0 <= T <= n):
        raise ConfigError(f"forward_process: T={T} outside [0, {n}]")
    tokens = np.asarray(x0.features)
    observed = np.flatnonzero(tokens != MISSING)
    t_eff = min(T, observed.size)
    dropped = rng.permutation(observed)[:t_eff] if t_eff else np.empty(0, dtype=int)
    out = tokens.copy()
    out[dropped] = MISSING
    mask = out == MISSING
    xt = Sample(label=x0.label, user_id=x0.user_id, features=tuple(int(t) for t in out))
    return xt, mask


def dropout_masks(tokens: np.ndarray, T: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Batched forward process over a [B, N] token matrix.

    For each row, marks min(T[b], #observed) uniformly-chosen observed slots,
    the same distribution as per-sample forward_process. Returns the drop mask
    only (union with `tokens == MISSING` gives the step mask).
    """
    observed = tokens != MISSING
    t_eff = np.minimum(np.asarray(T), observed.sum(axis=1))
    keys = rng.random(tokens.shape)
    keys[~observed] = np.inf
    ranks = keys.argsort(axis=1, kind="stable").argsort(axis=1, kind="stable")
    return ranks < t_eff[:, None]


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

@dataclass
class EncodeStats:
    """Counters surfaced by frozen-schema encoding."""

    oov: int = 0
    oov_users: int = 0


def encode_sample(
    record: list[str],
    schema: FeatureSchema,
    line: int | None = None,
    stats: EncodeStats | None = None,
) -> Sample:
    """Encode one CSV record [label, user_id, features...] against a frozen schema.

    Empty strings map to MISSING; out-of-dictionary values map to MISSING and
    are counted in `stats`. Malformed labels reject the record.
    """
    n = schema.n_features
    where = f" at line {line}" if line is not None else ""
    if len(record) != 2 + n:
        raise DataError(f"record{where}: expected {2 + n} columns, got {len(record)}")
    raw_label = record[0].strip()
    if raw_label not in ("0", "1"):
        raise DataError(f"record{where}: malformed label {raw_label!r} (not 0/1)")
    user_raw = record[1]
    user_id = schema.user_map().get(user_raw)
    if user_id is None:
        user_id = MISSING
        if stats is not None and user_raw != MISSING_VALUE:
            stats.oov_users += 1
    tokens = []
    maps = schema.token_maps()
    for f in range(n):
        tok = maps[f].get(record[2 + f])
        if tok is None:
            tok = MISSING
            if stats is not None and record[2 + f] != MISSING_VALUE:
                stats.oov += 1
        tokens.append(tok)
    return Sample(label=int(raw_label), user_id=user_id, features=tuple(tokens))


def decode_sample(sample: Sample, schema: FeatureSchema) -> list[str]:
    """Inverse of encode_sample: [label, user_id, features...] raw strings."""
    row = [str(sample.label), schema.user_vocab[sample.user_id]]
    row.extend(schema.features[f].vocab[tok] for f, tok in enumerate(sample.features))
    return row


class SchemaBuilder:
    """Builds per-feature token dictionaries from training records.

    Values get token ids in first-seen order, so ingestion is deterministic
    given the file. The schema is immutable once finalized.
    """

    def __init__(self, feature_names: list[str]):
        if not feature_names:
            raise ConfigError("SchemaBuilder: need at least one feature column")
        self.feature_names = list(feature_names)
        self._vocabs: list[list[str]] = [[MISSING_VALUE] for _ in feature_names]
        self._maps: list[dict] = [{MISSING_VALUE: 0} for _ in feature_names]
        self._user_vocab: list[str] = [MISSING_VALUE]
        self._user_map: dict = {MISSING_VALUE: 0}

    def observe(self, record: list[str], line: int | None = None) -> None:
        where = f" at line {line}" if line is not None else ""
        if len(record) != 2 + len(self.feature_names):
            raise DataError(f"record{where}: expected {2 + len(self.feature_names)} columns, got {len(record)}")
        if record[0].strip() not in ("0", "1"):
            raise DataError(f"record{where}: malformed label {record[0]!r} (not 0/1)")
        user = record[1]
        if user not in self._user_map:
            self._user_map[user] = len(self._user_vocab)
            self._user_vocab.append(user)
        for f, value in enumerate(record[2:]):
            if value not in self._maps[f]:
                self._maps[f][value] = len(self._vocabs[f])
                self._vocabs[f].append(value)

    def finalize(self, user_feature: int | None = None) -> FeatureSchema:
        features = []
        for name, vocab in zip(self.feature_names, self._vocabs):
            if len(vocab) < 2:  # never-observed feature still needs one real token
                vocab = vocab + [f"__unseen_{name}__"]
            features.append(FeatureField(name=name, vocab=tuple(vocab)))
        if user_feature is None and "user" in self.feature_names:
            user_feature = self.feature_names.index("user")
        return FeatureSchema(
            features=tuple(features),
            user_vocab=tuple(self._user_vocab),
            user_feature=user_feature,
        )


# ---------------------------------------------------------------------------
# Column-oriented sample storage for training/eval
# ---------------------------------------------------------------------------

@dataclass
class SampleSet:
    """Column-oriented batch of samples tied to one schema."""

    labels: np.ndarray  # [n] int8
    users: np.ndarray  # [n] int32
    tokens: np.ndarray  # [n, N] int32
    schema_hash: str

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @classmethod
    def from_samples(cls, samples: list[Sample], schema: FeatureSchema) -> "SampleSet":
        n = len(samples)
        n_feat = schema.n_features
        labels = np.zeros(n, dtype=np.int8)
        users = np.zeros(n, dtype=np.int32)
        tokens = np.zeros((n, n_feat), dtype=np.int32)
        for i, s in enumerate(samples):
            if len(s.features) != n_feat:
                raise DataError(f"sample {i}: expected {n_feat} features, got {len(s.features)}")
            labels[i] = s.label
            users[i] = s.user_id
            tokens[i] = s.features
        return cls(labels=labels, users=users, tokens=tokens, schema_hash=schema.hash())

    def to_samples(self) -> list[Sample]:
        return [
            Sample(label=int(self.labels[i]), user_id=int(self.users[i]), features=tuple(int(t) for t in self.tokens[i]))
            for i in range(len(self))
        ]

    def subset(self, idx: np.ndarray) -> "SampleSet":
        return SampleSet(
            labels=self.labels[idx], users=self.users[idx], tokens=self.tokens[idx], schema_hash=self.schema_hash
        )
