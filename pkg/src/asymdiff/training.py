"""Training and serving: the three-term objective (ranking cross-entropy,
latent reconstruction, task loss on the denoised latent), the per-batch update,
and the two prediction paths.

Per sample the step counter T is drawn uniformly from {0..N}, T observed slots
are dropped, and the denoiser learns to map the noisy latent back to the clean
one. Serving treats naturally-missing features as the noise: the observed-
missingness mask conditions the denoiser before the head scores the latent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from . import model as M
from .errors import ConfigError, DataError, NumericError
from .features import Sample, SampleSet, dropout_masks, sample_T
from .nn import AdamState, adam_step


@dataclass
class LossBreakdown:
    main: float
    recon: float
    aux: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainConfig:
    batch_size: int = 512
    epochs: int = 2
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 0  # steps between mid-run evals; 0 = only at the end
    log_every: int = 50
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def loss_main(y: int, yhat: float) -> float:
    """Binary cross-entropy -y*log(p) - (1-y)*log(1-p); p must be pre-clamped."""
    return float(-(y * np.log(yhat) + (1 - y) * np.log1p(-yhat)))


def loss_recon(z0_prime: np.ndarray, z0: np.ndarray) -> float:
    """Squared Euclidean distance between denoised and clean latents."""
    a = np.asarray(z0_prime)
    b = np.asarray(z0)
    if a.shape != b.shape:
        raise ConfigError(f"loss_recon: shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return float(np.dot(d.ravel(), d.ravel()))


def loss_aux(y: int, z0_prime: np.ndarray, params: M.ModelParams) -> float:
    """Cross-entropy of the shared head applied to the denoised latent."""
    return loss_main(y, M.predict(params, z0_prime))


def _ce_vec(y: np.ndarray, p: np.ndarray) -> np.ndarray:
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def _dce_vec(y: np.ndarray, p: np.ndarray) -> np.ndarray:
    return -y / p + (1.0 - y) / (1.0 - p)


# ---------------------------------------------------------------------------
# Batch objective: forward + analytic gradients
# ---------------------------------------------------------------------------

def batch_objective(params: M.ModelParams, tokens: np.ndarray, labels: np.ndarray,
                    drop: np.ndarray | None, compute_grads: bool = True):
    """Mean three-term loss over a batch and, optionally, its exact gradients.

    `drop` is the sampled dropout mask ([B, N] bool) or None for the plain
    cross-entropy path (both auxiliary weights zero). Deterministic given its
    inputs, so it doubles as the target of finite-difference checks.
    """
    cfg = params.config
    b = tokens.shape[0]
    dt = cfg.np_dtype
    y = labels.astype(dt)
    observed_missing = tokens == 0

    z0, c0 = M.extract_batch(params, tokens, observed_missing)
    p0, cf0 = M.predict_batch(params, z0)
    main = float(_ce_vec(y, p0).mean())

    diffusion = drop is not None and (cfg.lambda_recon > 0 or cfg.lambda_aux > 0)
    recon = aux = 0.0
    if diffusion:
        union = observed_missing | drop
        xt = np.where(drop, 0, tokens)
        zt, ct = M.extract_batch(params, xt, union)
        z0p, cg = M.denoise_batch(params, union, zt)
        diff = z0p - z0
        recon = float((diff * diff).sum(axis=1).mean())
        pa, cfa = M.predict_batch(params, z0p)
        aux = float(_ce_vec(y, pa).mean())

    total = cfg.lambda_main * main + cfg.lambda_recon * recon + cfg.lambda_aux * aux
    breakdown = LossBreakdown(main=main, recon=recon, aux=aux, total=total)
    if not np.isfinite(total):
        raise NumericError("non-finite loss", breakdown=breakdown.as_dict())
    if not compute_grads:
        return breakdown, None

    grads = params.zero_grads()
    dz0 = M.predict_backward(params, cf0, (cfg.lambda_main / b) * _dce_vec(y, p0), grads)
    if diffusion:
        dz0p = np.zeros_like(z0p)
        if cfg.lambda_aux > 0:
            dz0p += M.predict_backward(params, cfa, (cfg.lambda_aux / b) * _dce_vec(y, pa), grads)
        if cfg.lambda_recon > 0:
            dz0p += (2.0 * cfg.lambda_recon / b) * diff
            if not cfg.stop_grad_target:
                dz0 = dz0 - (2.0 * cfg.lambda_recon / b) * diff
        dzt = M.denoise_backward(params, cg, dz0p, grads)
        M.extract_backward(params, ct, dzt, grads)
    M.extract_backward(params, c0, dz0, grads)
    return breakdown, grads


def train_step(params: M.ModelParams, opt: AdamState, tokens: np.ndarray, labels: np.ndarray,
               rng: np.random.Generator):
    """One optimizer update on a batch. Returns (LossBreakdown, clamp count).

    Draws one T per sample; when both auxiliary weights are zero the dropout
    machinery is skipped entirely, which makes the base arm's parameter
    trajectory literally a plain cross-entropy trainer's.
    """
    cfg = params.config
    drop = None
    clamped = 0
    if cfg.lambda_recon > 0 or cfg.lambda_aux > 0:
        n = params.schema.n_features
        t_req = sample_T(rng, n, size=tokens.shape[0])
        droppable = (tokens != 0).sum(axis=1)
        clamped = int((t_req > droppable).sum())
        drop = dropout_masks(tokens, t_req, rng)
    breakdown, grads = batch_objective(params, tokens, labels, drop)
    adam_step(params.tensors, grads, opt)
    return breakdown, clamped


# ---------------------------------------------------------------------------
# Serving
# ---------------------------------------------------------------------------

def serve_predict(params: M.ModelParams, x: Sample, schema_hash: str | None = None,
                  trace: list | None = None) -> float:
    """Denoising path: score f(g([s, h(x)])) with s the observed-missingness mask.

    MISSING tokens already select the learned missing embedding inside h, so
    the mask's only job here is conditioning the denoiser.
    """
    if schema_hash is not None and schema_hash != params.schema_hash:
        raise DataError("schema hash mismatch between checkpoint and input")
    tokens = np.asarray(x.features, dtype=np.int64)[None, :]
    z, _ = M.extract_batch(params, tokens)
    if trace is not None:
        trace.append("h")
    z0p, _ = M.denoise_batch(params, tokens == 0, z)
    if trace is not None:
        trace.append("g")
    p, _ = M.predict_batch(params, z0p)
    if trace is not None:
        trace.append("f")
    return float(p[0])


def base_predict(params: M.ModelParams, x: Sample, schema_hash: str | None = None,
                 trace: list | None = None) -> float:
    """Plain path: score f(h(x)), no denoising."""
    if schema_hash is not None and schema_hash != params.schema_hash:
        raise DataError("schema hash mismatch between checkpoint and input")
    tokens = np.asarray(x.features, dtype=np.int64)[None, :]
    z, _ = M.extract_batch(params, tokens)
    if trace is not None:
        trace.append("h")
    p, _ = M.predict_batch(params, z)
    if trace is not None:
        trace.append("f")
    return float(p[0])


def _check_set(params: M.ModelParams, sset: SampleSet) -> None:
    if sset.schema_hash != params.schema_hash:
        raise DataError("schema hash mismatch between checkpoint and sample set")


def serve_scores(params: M.ModelParams, sset: SampleSet, chunk: int = 4096) -> np.ndarray:
    """Vectorized serve_predict over a sample set."""
    _check_set(params, sset)
    out = np.empty(len(sset), dtype=np.float64)
    for lo in range(0, len(sset), chunk):
        tok = sset.tokens[lo : lo + chunk]
        miss = tok == 0
        z, _ = M.extract_batch(params, tok, miss)
        z0p, _ = M.denoise_batch(params, miss, z)
        p, _ = M.predict_batch(params, z0p)
        out[lo : lo + chunk] = p
    return out


def base_scores(params: M.ModelParams, sset: SampleSet, chunk: int = 4096) -> np.ndarray:
    """Vectorized base_predict over a sample set."""
    _check_set(params, sset)
    out = np.empty(len(sset), dtype=np.float64)
    for lo in range(0, len(sset), chunk):
        tok = sset.tokens[lo : lo + chunk]
        z, _ = M.extract_batch(params, tok, tok == 0)
        p, _ = M.predict_batch(params, z)
        out[lo : lo + chunk] = p
    return out


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------

@dataclass
class RunLog:
    """Append-only JSONL run log; no wall-clock fields so runs stay byte-comparable."""

    path: object = None
    lines: list = field(default_factory=list)

    def emit(self, event: str, **fields) -> None:
        rec = {"event": event, **fields}
        self.lines.append(rec)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


class Trainer:
    """Owns parameter mutation for one run: seeded shuffling, per-batch updates,
    clamp accounting, optional mid-run evaluation.

    `step_fn(params, opt, tokens, labels, rng) -> (LossBreakdown, clamps)` is
    pluggable so alternative noise mechanisms reuse the same loop.
    """

    def __init__(self, params: M.ModelParams, cfg: TrainConfig, log: RunLog | None = None,
                 step_fn=train_step, opt: AdamState | None = None, start_step: int = 0):
        self.params = params
        self.cfg = cfg
        self.opt = opt or AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
        self.log = log or RunLog()
        self.step_fn = step_fn
        self.step = start_step
        seq = np.random.SeedSequence(cfg.seed)
        shuffle_seed, dropout_seed = seq.spawn(2)
        self.shuffle_rng = np.random.default_rng(shuffle_seed)
        self.dropout_rng = np.random.default_rng(dropout_seed)

    def run(self, train: SampleSet, eval_fn=None) -> LossBreakdown:
        """Train for cfg.epochs over `train`; returns the final batch breakdown."""
        _check_set(self.params, train)
        n = len(train)
        cfg = self.cfg
        last = LossBreakdown(0.0, 0.0, 0.0, 0.0)
        for epoch in range(cfg.epochs):
            order = self.shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                try:
                    last, clamped = self.step_fn(
                        self.params, self.opt, train.tokens[idx], train.labels[idx], self.dropout_rng
                    )
                except NumericError as err:
                    # the optimizer reports its own counter under "step"; keep
                    # both by renaming its copy before stamping the trainer's
                    detail = dict(err.diagnostics)
                    if "step" in detail:
                        detail["opt_step"] = detail.pop("step")
                    self.log.emit("abort", step=self.step, error=str(err), **detail)
                    err.diagnostics.setdefault("step", self.step)
                    raise
                self.step += 1
                if cfg.log_every and self.step % cfg.log_every == 0:
                    self.log.emit("step", step=self.step, clamped=clamped, **last.as_dict())
                if eval_fn is not None and cfg.eval_every and self.step % cfg.eval_every == 0:
                    self.log.emit("eval", step=self.step, **eval_fn(self.params))
            self.log.emit("epoch", epoch=epoch, step=self.step, **last.as_dict())
        if eval_fn is not None:
            self.log.emit("eval", step=self.step, **eval_fn(self.params))
        return last
