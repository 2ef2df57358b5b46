"""The three networks: feature extractor (embeddings + cross layers + MLP),
sigmoid predictor head, and the two-layer denoiser that maps a concatenated
[step mask, noisy latent] to a completed latent.

Batched forward/backward pairs are the workhorses; the single-sample wrappers
match the serving call shape. Parameters live in a flat name -> ndarray dict
so the optimizer and the gradient checker can treat blocks uniformly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .errors import ConfigError, DataError
from .features import FeatureSchema, Sample

CHECKPOINT_MAGIC = b"ASYMDIFF-CKPT-v1\n"


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 16
    cross_layers: int = 2
    hidden_sizes: tuple[int, ...] = (256, 128)
    latent_dim: int = 128
    denoiser_hidden: int = 128
    lambda_main: float = 1.0
    lambda_recon: float = 1.0
    lambda_aux: float = 1.0
    stop_grad_target: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if self.latent_dim <= 0 or self.embed_dim <= 0 or self.denoiser_hidden <= 0:
            raise ConfigError("model dims must be positive")
        if any(h <= 0 for h in self.hidden_sizes):
            raise ConfigError("hidden sizes must be positive")
        if self.cross_layers < 0:
            raise ConfigError("cross_layers must be >= 0")
        if min(self.lambda_main, self.lambda_recon, self.lambda_aux) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


@dataclass
class ModelParams:
    """All learnable tensors, keyed by block name, plus the schema they fit."""

    schema: FeatureSchema
    config: ModelConfig
    tensors: dict

    @property
    def schema_hash(self) -> str:
        return self.schema.hash()

    def n_params(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.schema, self.config, {k: v.copy() for k, v in self.tensors.items()})

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def _glorot(rng: np.random.Generator, d_in: int, d_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out)).astype(dtype)


def init_params(schema: FeatureSchema, config: ModelConfig, seed: int) -> ModelParams:
    """Deterministic initialization: embeddings U(-0.05, 0.05), affine weights
    fan-based uniform, biases zero."""
    rng = np.random.default_rng(seed)
    dt = config.np_dtype
    t: dict = {}
    for f in schema.features:
        t[f"emb.{f.name}"] = rng.uniform(-0.05, 0.05, size=(f.vocab_size, config.embed_dim)).astype(dt)
    d = schema.n_features * config.embed_dim
    for l in range(config.cross_layers):
        t[f"cross.{l}.W"] = _glorot(rng, d, d, dt)
        t[f"cross.{l}.b"] = np.zeros(d, dtype=dt)
    dims = [d, *config.hidden_sizes, config.latent_dim]
    for k in range(len(dims) - 1):
        t[f"mlp.{k}.W"] = _glorot(rng, dims[k], dims[k + 1], dt)
        t[f"mlp.{k}.b"] = np.zeros(dims[k + 1], dtype=dt)
    t["f.w"] = _glorot(rng, config.latent_dim, 1, dt)
    t["f.b"] = np.zeros(1, dtype=dt)
    g_in = config.latent_dim + schema.n_features
    t["g.0.W"] = _glorot(rng, g_in, config.denoiser_hidden, dt)
    t["g.0.b"] = np.zeros(config.denoiser_hidden, dtype=dt)
    t["g.1.W"] = _glorot(rng, config.denoiser_hidden, config.latent_dim, dt)
    t["g.1.b"] = np.zeros(config.latent_dim, dtype=dt)
    return ModelParams(schema=schema, config=config, tensors=t)


# ---------------------------------------------------------------------------
# Feature extractor h
# ---------------------------------------------------------------------------

def extract_batch(params: ModelParams, tokens: np.ndarray, mask: np.ndarray | None = None):
    """h over a [B, N] token matrix; slots with a set mask bit (or already
    holding MISSING) use the learned missing-token embedding.

    Returns (z [B, latent_dim], cache for the backward pass).
    """
    schema, cfg = params.schema, params.config
    tokens = np.atleast_2d(tokens)
    if tokens.shape[1] != schema.n_features:
        raise ConfigError(f"extract: expected {schema.n_features} feature columns, got {tokens.shape[1]}")
    eff = np.where(mask, 0, tokens) if mask is not None else tokens
    cols = []
    for f, field in enumerate(schema.features):
        cols.append(nn.embedding_lookup(params.tensors[f"emb.{field.name}"], eff[:, f], feature=field.name))
    x0 = np.concatenate(cols, axis=1)
    x = x0
    cross = []
    for l in range(cfg.cross_layers):
        u = nn.affine_forward(x, params.tensors[f"cross.{l}.W"], params.tensors[f"cross.{l}.b"])
        cross.append((x, u))
        x = x0 * u + x
    mlp = []
    a = x
    n_hidden = len(cfg.hidden_sizes)
    for k in range(n_hidden):
        pre = nn.affine_forward(a, params.tensors[f"mlp.{k}.W"], params.tensors[f"mlp.{k}.b"])
        mlp.append((a, pre))
        a = nn.relu_forward(pre)
    z = nn.affine_forward(a, params.tensors[f"mlp.{n_hidden}.W"], params.tensors[f"mlp.{n_hidden}.b"])
    cache = {"eff": eff, "x0": x0, "cross": cross, "mlp": mlp, "last_in": a}
    return z, cache


def extract_backward(params: ModelParams, cache: dict, dz: np.ndarray, grads: dict) -> None:
    """Accumulate gradients of the extractor into `grads` given dL/dz."""
    cfg = params.config
    n_hidden = len(cfg.hidden_sizes)
    da, dw, db = nn.affine_backward(dz, cache["last_in"], params.tensors[f"mlp.{n_hidden}.W"])
    grads[f"mlp.{n_hidden}.W"] += dw
    grads[f"mlp.{n_hidden}.b"] += db
    for k in range(n_hidden - 1, -1, -1):
        a_in, pre = cache["mlp"][k]
        dpre = nn.relu_backward(da, pre)
        da, dw, db = nn.affine_backward(dpre, a_in, params.tensors[f"mlp.{k}.W"])
        grads[f"mlp.{k}.W"] += dw
        grads[f"mlp.{k}.b"] += db
    x0 = cache["x0"]
    g = da
    dx0 = np.zeros_like(x0)
    for l in range(cfg.cross_layers - 1, -1, -1):
        x_l, u = cache["cross"][l]
        dx0 += g * u
        du = g * x0
        _, dw, db = nn.affine_backward(du, x_l, params.tensors[f"cross.{l}.W"])
        grads[f"cross.{l}.W"] += dw
        grads[f"cross.{l}.b"] += db
        g = g + du @ params.tensors[f"cross.{l}.W"].T
    dx0 += g
    d_e = cfg.embed_dim
    eff = cache["eff"]
    for f, field in enumerate(params.schema.features):
        name = f"emb.{field.name}"
        grads[name] += nn.embedding_backward(
            np.ascontiguousarray(dx0[:, f * d_e : (f + 1) * d_e]), eff[:, f], params.tensors[name].shape
        )


def extract(params: ModelParams, sample: Sample, mask: np.ndarray | None = None) -> np.ndarray:
    """h on one sample; returns the latent vector."""
    tokens = np.asarray(sample.features, dtype=np.int64)[None, :]
    m = None if mask is None else np.asarray(mask, dtype=bool)[None, :]
    z, _ = extract_batch(params, tokens, m)
    return z[0]


# ---------------------------------------------------------------------------
# Predictor f
# ---------------------------------------------------------------------------

def predict_batch(params: ModelParams, z: np.ndarray):
    """sigmoid(w'z + b), clamped away from {0, 1}. Returns (probs [B], cache)."""
    logits = nn.affine_forward(z, params.tensors["f.w"], params.tensors["f.b"])
    p = nn.sigmoid_forward(logits[:, 0])
    return p, {"z": z, "p": p}


def predict_backward(params: ModelParams, cache: dict, dp: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate head gradients; returns dL/dz."""
    dlogit = nn.sigmoid_backward(dp, cache["p"])[:, None]
    dz, dw, db = nn.affine_backward(dlogit, cache["z"], params.tensors["f.w"])
    grads["f.w"] += dw
    grads["f.b"] += db
    return dz


def predict(params: ModelParams, z: np.ndarray) -> float:
    p, _ = predict_batch(params, np.atleast_2d(z))
    return float(p[0])


# ---------------------------------------------------------------------------
# Denoiser g
# ---------------------------------------------------------------------------

def denoise_batch(params: ModelParams, mask: np.ndarray, z_noisy: np.ndarray):
    """g([s, z_T]): the 0/1 step mask is concatenated with the noisy latent,
    then passed through affine -> ReLU -> affine. Returns (z0' [B, d_z], cache)."""
    n = params.schema.n_features
    mask = np.atleast_2d(mask)
    if mask.shape[1] != n:
        raise ConfigError(f"denoise: mask has {mask.shape[1]} bits, schema has {n} features")
    if z_noisy.shape[1] != params.config.latent_dim:
        raise ConfigError(f"denoise: latent dim {z_noisy.shape[1]} != {params.config.latent_dim}")
    inp = np.concatenate([mask.astype(z_noisy.dtype), z_noisy], axis=1)
    pre = nn.affine_forward(inp, params.tensors["g.0.W"], params.tensors["g.0.b"])
    h = nn.relu_forward(pre)
    out = nn.affine_forward(h, params.tensors["g.1.W"], params.tensors["g.1.b"])
    return out, {"inp": inp, "pre": pre, "h": h}


def denoise_backward(params: ModelParams, cache: dict, dout: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate denoiser gradients; returns dL/dz_noisy (mask slice dropped)."""
    dh, dw, db = nn.affine_backward(dout, cache["h"], params.tensors["g.1.W"])
    grads["g.1.W"] += dw
    grads["g.1.b"] += db
    dpre = nn.relu_backward(dh, cache["pre"])
    dinp, dw, db = nn.affine_backward(dpre, cache["inp"], params.tensors["g.0.W"])
    grads["g.0.W"] += dw
    grads["g.0.b"] += db
    return dinp[:, params.schema.n_features :]


def denoise(params: ModelParams, mask: np.ndarray, z_noisy: np.ndarray) -> np.ndarray:
    out, _ = denoise_batch(params, np.asarray(mask, dtype=bool)[None, :], np.atleast_2d(z_noisy))
    return out[0]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, opt_state=None, meta: dict | None = None) -> None:
    """Single-file container: magic, JSON header, raw little-endian tensor bytes.

    Byte-deterministic for identical inputs (no timestamps, sorted keys).
    """
    names = sorted(params.tensors)
    manifest = []
    payload = bytearray()
    def put(name: str, arr: np.ndarray):
        raw = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "nbytes": len(raw)})
        payload.extend(raw)

    for name in names:
        put(name, params.tensors[name])
    opt_header = None
    if opt_state is not None:
        opt_header = {"lr": opt_state.lr, "beta1": opt_state.beta1, "beta2": opt_state.beta2,
                      "eps": opt_state.eps, "t": opt_state.t}
        for name in names:
            if name in opt_state.m:
                put(f"opt.m.{name}", opt_state.m[name])
                put(f"opt.v.{name}", opt_state.v[name])
    header = {
        "config": asdict(params.config),
        "schema": params.schema.to_dict(),
        "schema_hash": params.schema_hash,
        "meta": meta or {},
        "opt": opt_header,
        "tensors": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path):
    """Returns (params, opt_state or None, meta). Verifies magic and schema hash."""
    from .nn import AdamState

    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for entry in header["tensors"]:
            raw = fh.read(entry["nbytes"])
            arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
            arrays[entry["name"]] = arr
    cfg_d = dict(header["config"])
    cfg_d["hidden_sizes"] = tuple(cfg_d["hidden_sizes"])
    config = ModelConfig(**cfg_d)
    schema = FeatureSchema.from_dict(header["schema"])
    if schema.hash() != header["schema_hash"]:
        raise DataError(f"{path}: schema hash mismatch (corrupt or tampered checkpoint)")
    tensors = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    params = ModelParams(schema=schema, config=config, tensors=tensors)
    opt_state = None
    if header["opt"] is not None:
        o = header["opt"]
        opt_state = AdamState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], t=o["t"])
        for k, v in arrays.items():
            if k.startswith("opt.m."):
                opt_state.m[k[len("opt.m."):]] = v
            elif k.startswith("opt.v."):
                opt_state.v[k[len("opt.v."):]] = v
    return params, opt_state, header["meta"]
