"""Training and serving engine for binary-label tabular ranking with
feature-dropout diffusion: features are noised by masking in raw token space,
denoised in latent space, and naturally-missing features at serving time are
treated as exactly that noise.
"""

from .version import __version__
from .errors import ConfigError, DataError, EngineError, NumericError, UndefinedMetricError
from .features import (
    MISSING,
    FeatureField,
    FeatureSchema,
    Sample,
    SampleSet,
    forward_process,
    mask_from_observed,
    sample_T,
)
from .model import ModelConfig, ModelParams, init_params, load_checkpoint, save_checkpoint
from .training import (
    LossBreakdown,
    TrainConfig,
    Trainer,
    base_predict,
    loss_aux,
    loss_main,
    loss_recon,
    serve_predict,
    train_step,
)
from .data import DatasetBundle, SynthSpec, default_synth_spec, generate, inject_missingness
from .metrics import MetricsReport, ScoredExample, auc, logloss, relaimpr, uauc
from .arms import ArmSpec, GaussSchedule, gaussian_forward, gaussian_reverse_loss, run_arm

__all__ = [
    "__version__",
    "ConfigError", "DataError", "EngineError", "NumericError", "UndefinedMetricError",
    "MISSING", "FeatureField", "FeatureSchema", "Sample", "SampleSet",
    "forward_process", "mask_from_observed", "sample_T",
    "ModelConfig", "ModelParams", "init_params", "load_checkpoint", "save_checkpoint",
    "LossBreakdown", "TrainConfig", "Trainer", "base_predict", "serve_predict",
    "loss_main", "loss_recon", "loss_aux", "train_step",
    "DatasetBundle", "SynthSpec", "default_synth_spec", "generate", "inject_missingness",
    "MetricsReport", "ScoredExample", "auc", "logloss", "relaimpr", "uauc",
    "ArmSpec", "GaussSchedule", "gaussian_forward", "gaussian_reverse_loss", "run_arm",
]
