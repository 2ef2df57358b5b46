"""Minimal dense numeric kernel: layer primitives with exact gradients, Adam,
and a finite-difference gradient checker.

All functions are pure over caller-owned numpy buffers. Tensors are plain 2-D
ndarrays (row-major); float64 is the default dtype so gradient checks have
headroom, float32 is allowed for training speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError

SIGMOID_EPS = 1e-7  # probabilities are clamped to [eps, 1-eps] before any log
FD_STEP = 1e-5  # central-difference step for gradient checks


def check_tensor2(name: str, a: np.ndarray) -> np.ndarray:
    """Validate a 2-D tensor: ndim, C-order data length, finiteness."""
    if not isinstance(a, np.ndarray) or a.ndim != 2:
        raise ConfigError(f"{name}: expected a 2-D array, got {getattr(a, 'shape', type(a))}")
    if not np.isfinite(a).all():
        raise NumericError(f"{name}: non-finite entries", tensor=name)
    return a


# ---------------------------------------------------------------------------
# Affine layer
# ---------------------------------------------------------------------------

def affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[b, j] = sum_i x[b, i] * w[i, j] + b[j]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ConfigError(f"affine_forward: {x.shape} x {w.shape} is not composable")
    if b.shape != (w.shape[1],):
        raise ConfigError(f"affine_forward: bias shape {b.shape} != ({w.shape[1]},)")
    return x @ w + b


def affine_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Returns (dx, dw, db) for the affine forward above."""
    if dout.shape != (x.shape[0], w.shape[1]):
        raise ConfigError(f"affine_backward: upstream {dout.shape} inconsistent with {x.shape} x {w.shape}")
    dx = dout @ w.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------------------
# Elementwise nonlinearities
# ---------------------------------------------------------------------------

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    """1 / (1 + exp(-x)), output clamped to [eps, 1-eps] so logs stay finite."""
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, SIGMOID_EPS, 1.0 - SIGMOID_EPS)


def sigmoid_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Local derivative s * (1 - s), evaluated at the (clamped) output."""
    return dout * out * (1.0 - out)


# ---------------------------------------------------------------------------
# Embedding lookup
# ---------------------------------------------------------------------------

def embedding_lookup(table: np.ndarray, ids: np.ndarray, feature: str = "?") -> np.ndarray:
    """Gather rows of `table`; every id must be < table row count."""
    ids = np.asarray(ids)
    if ids.size and ids.max() >= table.shape[0]:
        bad = int(ids.max())
        raise DataError(f"feature '{feature}': token id {bad} >= vocabulary size {table.shape[0]}")
    if ids.size and ids.min() < 0:
        raise DataError(f"feature '{feature}': negative token id {int(ids.min())}")
    return table[ids]


def embedding_backward(dout: np.ndarray, ids: np.ndarray, table_shape: tuple[int, int]) -> np.ndarray:
    """Scatter-add upstream rows into the looked-up rows (duplicates accumulate)."""
    grad = np.zeros(table_shape, dtype=dout.dtype)
    np.add.at(grad, np.asarray(ids), dout)
    return grad


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second-moment buffers keyed like the parameter dict, plus step t."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def buffers_for(self, name: str, like: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)
        return self.m[name], self.v[name]


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on `params`.

    Aborts with diagnostics on any non-finite gradient.
    """
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for '{name}'")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in '{name}' at step {t}", step=t, param=name)
        m, v = state.buffers_for(name, p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Per-block max relative error between analytic and central-difference grads."""

    tolerance: float
    max_rel_err: dict
    failed: list

    @property
    def ok(self) -> bool:
        return not self.failed


def grad_check(loss_fn, params: dict, tolerance: float = 1e-4, step: float = FD_STEP) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    `loss_fn(params) -> (loss, grads)` must be deterministic. Every element of
    every block is perturbed; failures are report entries, never exceptions.
    """
    _, analytic = loss_fn(params)
    max_err: dict = {}
    failed: list = []
    for name, p in params.items():
        numeric = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up, _ = loss_fn(params)
            flat[i] = keep - step
            down, _ = loss_fn(params)
            flat[i] = keep
            num_flat[i] = (up - down) / (2.0 * step)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        rel = np.abs(a - numeric) / denom
        worst = float(rel.max()) if rel.size else 0.0
        max_err[name] = worst
        if worst >= tolerance:
            failed.append(name)
    return GradCheckReport(tolerance=tolerance, max_rel_err=max_err, failed=failed)
