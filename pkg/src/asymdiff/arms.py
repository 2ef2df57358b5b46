"""Comparison arms sharing one h/f architecture and one evaluation harness.

Arms: the plain ranking model, the feature-dropout diffusion model, its two
single-knob ablations, and a symmetric Gaussian latent-diffusion variant. The
Gaussian arm noises the latent directly (closed-form marginal), conditions the
denoiser on the step index instead of a missingness mask, and serves through
the plain path since its denoiser has no serving-time role.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import model as M
from . import training as T
from .data import DatasetBundle
from .errors import ConfigError
from .features import FeatureSchema, SampleSet
from .metrics import MetricsReport, auc, evaluate_scores
from .nn import AdamState, adam_step

ARM_NAMES = ("base", "asymdiff", "asymdiff_wo_recon", "asymdiff_wo_aux", "gauss_diff")


@dataclass(frozen=True)
class GaussSchedule:
    """Variance schedule for the Gaussian arm; alpha_bar_k = prod_{i<=k}(1 - beta_i)."""

    betas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.betas:
            raise ConfigError("schedule needs at least one step")
        if any(not 0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError("schedule betas must lie in [0, 1)")

    @property
    def n_steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(1.0 - np.asarray(self.betas, dtype=np.float64))

    @classmethod
    def linear(cls, n_steps: int = 10, beta_start: float = 1e-4, beta_end: float = 0.1) -> "GaussSchedule":
        return cls(betas=tuple(np.linspace(beta_start, beta_end, n_steps)))

    def to_dict(self) -> dict:
        return {"betas": list(self.betas)}


@dataclass(frozen=True)
class ArmSpec:
    """One comparison arm; the ablations pin their respective weight to exactly 0."""

    name: str
    lambda_recon: float = 1.0
    lambda_aux: float = 1.0
    schedule: GaussSchedule | None = None

    def __post_init__(self):
        if self.name not in ARM_NAMES:
            raise ConfigError(f"unknown arm {self.name!r}, expected one of {ARM_NAMES}")
        if self.name == "base" and (self.lambda_recon != 0.0 or self.lambda_aux != 0.0):
            raise ConfigError("base arm requires lambda_recon == lambda_aux == 0")
        if self.name == "asymdiff_wo_recon" and self.lambda_recon != 0.0:
            raise ConfigError("asymdiff_wo_recon requires lambda_recon == 0")
        if self.name == "asymdiff_wo_aux" and self.lambda_aux != 0.0:
            raise ConfigError("asymdiff_wo_aux requires lambda_aux == 0")
        if self.name == "gauss_diff":
            if self.schedule is None:
                object.__setattr__(self, "schedule", GaussSchedule.linear())
            if self.lambda_aux != 0.0:
                raise ConfigError("gauss_diff trains only the reconstruction term; lambda_aux must be 0")
        elif self.schedule is not None:
            raise ConfigError(f"arm {self.name!r} takes no Gaussian schedule")

    @classmethod
    def make(cls, name: str, lambda_recon: float = 1.0, lambda_aux: float = 1.0,
             schedule: GaussSchedule | None = None) -> "ArmSpec":
        """Arm by name with the ablation zeros applied for the caller."""
        if name == "base":
            return cls(name, 0.0, 0.0)
        if name == "asymdiff":
            return cls(name, lambda_recon, lambda_aux)
        if name == "asymdiff_wo_recon":
            return cls(name, 0.0, lambda_aux)
        if name == "asymdiff_wo_aux":
            return cls(name, lambda_recon, 0.0)
        if name == "gauss_diff":
            return cls(name, lambda_recon, 0.0, schedule or GaussSchedule.linear())
        raise ConfigError(f"unknown arm {name!r}, expected one of {ARM_NAMES}")

    @property
    def serving_path(self) -> str:
        """Denoising at serve time only for the asymmetric arms; the Gaussian
        variant's diffusion is auxiliary training, so it serves the plain way."""
        return "serve_predict" if self.name.startswith("asymdiff") else "base_predict"

    def model_config(self, base: M.ModelConfig) -> M.ModelConfig:
        """The shared architecture with this arm's loss weights applied."""
        lr = self.lambda_recon if self.name != "gauss_diff" else 0.0
        return dataclasses.replace(base, lambda_recon=lr, lambda_aux=self.lambda_aux)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lambda_recon": self.lambda_recon,
            "lambda_aux": self.lambda_aux,
            "schedule": self.schedule.to_dict() if self.schedule else None,
        }


# ---------------------------------------------------------------------------
# Gaussian latent diffusion (the symmetric foil)
# ---------------------------------------------------------------------------

def gaussian_forward(z0: np.ndarray, k: int | np.ndarray, schedule: GaussSchedule,
                     rng: np.random.Generator) -> np.ndarray:
    """Closed-form marginal z_k = sqrt(abar_k) z0 + sqrt(1 - abar_k) eps."""
    k_arr = np.asarray(k)
    if np.any(k_arr < 1) or np.any(k_arr > schedule.n_steps):
        raise ConfigError(f"step k must lie in [1, {schedule.n_steps}]")
    abar = schedule.alpha_bar()[k_arr - 1]
    eps = rng.standard_normal(np.shape(z0))
    if z0.ndim == 2:
        abar = np.asarray(abar).reshape(-1, 1)
    return np.sqrt(abar) * z0 + np.sqrt(1.0 - abar) * eps


def _step_onehot(k: np.ndarray, n_features: int, n_steps: int, dtype) -> np.ndarray:
    """Step index encoded one-hot in the denoiser's mask slots; needs K <= N."""
    if n_steps > n_features:
        raise ConfigError(
            f"gauss_diff step count {n_steps} exceeds the {n_features} mask slots; lower the schedule length"
        )
    s = np.zeros((k.shape[0], n_features), dtype=dtype)
    s[np.arange(k.shape[0]), k - 1] = 1.0
    return s


def gaussian_reverse_loss(params: M.ModelParams, z0: np.ndarray, k: int | np.ndarray,
                          schedule: GaussSchedule, rng: np.random.Generator) -> float:
    """||g([onehot k, z_k]) - z0||^2, the symmetric denoising objective."""
    z0 = np.atleast_2d(np.asarray(z0, dtype=params.config.np_dtype))
    k_arr = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if k_arr.shape[0] != z0.shape[0]:
        k_arr = np.full(z0.shape[0], int(k), dtype=np.int64)
    zk = gaussian_forward(z0, k_arr, schedule, rng)
    s = _step_onehot(k_arr, params.schema.n_features, schedule.n_steps, params.config.np_dtype)
    z0p, _ = M.denoise_batch(params, s, zk)
    d = z0p - z0
    return float((d * d).sum(axis=1).mean())


def make_gauss_step(schedule: GaussSchedule, lam: float):
    """Training step for the Gaussian arm: CE plus lam * symmetric denoising loss.

    The noisy latent is built from the live z0, so h trains through the noise
    chain; the reconstruction target follows the stop_grad_target flag exactly
    as the asymmetric objective does.
    """

    def step(params: M.ModelParams, opt: AdamState, tokens: np.ndarray, labels: np.ndarray,
             rng: np.random.Generator):
        cfg = params.config
        b = tokens.shape[0]
        y = labels.astype(cfg.np_dtype)
        z0, c0 = M.extract_batch(params, tokens, tokens == 0)
        p0, cf0 = M.predict_batch(params, z0)
        main = float(T._ce_vec(y, p0).mean())

        k = rng.integers(1, schedule.n_steps + 1, b)
        abar = schedule.alpha_bar()[k - 1]
        eps = rng.standard_normal(z0.shape)
        zk = np.sqrt(abar)[:, None] * z0 + np.sqrt(1.0 - abar)[:, None] * eps
        s = _step_onehot(k, params.schema.n_features, schedule.n_steps, cfg.np_dtype)
        z0p, cg = M.denoise_batch(params, s, zk)
        diff = z0p - z0
        recon = float((diff * diff).sum(axis=1).mean())
        total = cfg.lambda_main * main + lam * recon
        breakdown = T.LossBreakdown(main=main, recon=recon, aux=0.0, total=total)

        grads = params.zero_grads()
        dz0 = M.predict_backward(params, cf0, (cfg.lambda_main / b) * T._dce_vec(y, p0), grads)
        dz0p = (2.0 * lam / b) * diff
        dzk = M.denoise_backward(params, cg, dz0p, grads)
        dz0 = dz0 + np.sqrt(abar)[:, None] * dzk
        if not cfg.stop_grad_target:
            dz0 = dz0 - (2.0 * lam / b) * diff
        M.extract_backward(params, c0, dz0, grads)
        adam_step(params.tensors, grads, opt)
        return breakdown, 0

    return step


# ---------------------------------------------------------------------------
# Running arms
# ---------------------------------------------------------------------------

def controlled_hash(model_cfg: M.ModelConfig, train_cfg: T.TrainConfig, schema_hash: str) -> str:
    """Hash of everything the arms must share: architecture, optimizer and data
    settings, schema. Loss weights and arm identity are deliberately excluded."""
    import hashlib

    shared = {
        "embed_dim": model_cfg.embed_dim,
        "cross_layers": model_cfg.cross_layers,
        "hidden_sizes": list(model_cfg.hidden_sizes),
        "latent_dim": model_cfg.latent_dim,
        "denoiser_hidden": model_cfg.denoiser_hidden,
        "stop_grad_target": model_cfg.stop_grad_target,
        "dtype": model_cfg.dtype,
        "train": dataclasses.asdict(train_cfg),
        "schema_hash": schema_hash,
    }
    blob = json.dumps(shared, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def train_arm(arm: ArmSpec, train_set: SampleSet, schema: FeatureSchema, seed: int,
              model_cfg: M.ModelConfig, train_cfg: T.TrainConfig,
              log: T.RunLog | None = None) -> tuple[M.ModelParams, T.Trainer]:
    """Train one arm for one seed; init and data order depend only on the seed."""
    cfg = arm.model_config(model_cfg)
    params = M.init_params(schema, cfg, seed=seed)
    tcfg = dataclasses.replace(train_cfg, seed=seed)
    if arm.name == "gauss_diff":
        step_fn = make_gauss_step(arm.schedule, arm.lambda_recon)
        if arm.schedule.n_steps > schema.n_features:
            raise ConfigError(
                f"gauss_diff step count {arm.schedule.n_steps} exceeds the "
                f"{schema.n_features} mask slots; lower the schedule length"
            )
    else:
        step_fn = T.train_step
    trainer = T.Trainer(params, tcfg, log=log, step_fn=step_fn)
    trainer.run(train_set)
    return params, trainer


def evaluate_arm(arm: ArmSpec, params: M.ModelParams, eval_set: SampleSet, seed: int,
                 config_hash: str = "", rho: float | None = None,
                 oracle_auc: float | None = None) -> MetricsReport:
    """Score the eval set through the arm's serving path and report metrics."""
    if arm.serving_path == "serve_predict":
        scores = T.serve_scores(params, eval_set)
    else:
        scores = T.base_scores(params, eval_set)
    fields = evaluate_scores(eval_set.users, eval_set.labels, scores)
    return MetricsReport(
        arm=arm.name, seed=seed, serving_path=arm.serving_path,
        config_hash=config_hash, rho=rho, oracle_auc=oracle_auc, **fields,
    )


def bundle_oracle_auc(bundle: DatasetBundle) -> float | None:
    """AUC of the generator's own scores on the un-masked eval rows."""
    if bundle.eval_oracle_scores is None:
        return None
    return auc(bundle.eval.labels, bundle.eval_oracle_scores)


def run_arm(arm: ArmSpec, bundle: DatasetBundle, seeds: list[int],
            model_cfg: M.ModelConfig | None = None, train_cfg: T.TrainConfig | None = None,
            config_hash: str = "") -> list[MetricsReport]:
    """Train and evaluate the arm once per seed."""
    model_cfg = model_cfg or M.ModelConfig()
    train_cfg = train_cfg or T.TrainConfig()
    oracle = bundle_oracle_auc(bundle)
    reports = []
    for seed in seeds:
        params, _ = train_arm(arm, bundle.train, bundle.schema, seed, model_cfg, train_cfg)
        reports.append(
            evaluate_arm(arm, params, bundle.eval, seed, config_hash=config_hash, oracle_auc=oracle)
        )
    return reports
