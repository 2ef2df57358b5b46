"""Shared fixtures and test-local oracles.

The oracles here are deliberately independent of the package's own math:
finite differences, triple-loop matmuls, and O(n^2) pairwise statistics, so
product code is never checked against itself.
"""

import numpy as np
import pytest

from asymdiff.features import FeatureField, FeatureSchema


def fd_grad(loss_fn, params: dict, step: float = 1e-5) -> dict:
    """Central finite differences of loss_fn over every element of every block."""
    grads = {}
    for name in params:
        p = params[name]
        g = np.zeros_like(p, dtype=np.float64)
        flat, gf = p.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_fn(params)
            flat[i] = orig - step
            lm = loss_fn(params)
            flat[i] = orig
            gf[i] = (lp - lm) / (2.0 * step)
        grads[name] = g
    return grads


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Elementwise |a-b| / max(|a|, |b|, floor), reduced by max."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def matmul_oracle(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Triple-loop matrix multiply."""
    out = np.zeros((x.shape[0], w.shape[1]), dtype=np.float64)
    for b in range(x.shape[0]):
        for j in range(w.shape[1]):
            acc = 0.0
            for i in range(x.shape[1]):
                acc += x[b, i] * w[i, j]
            out[b, j] = acc
    return out


def pairwise_auc_oracle(labels, scores) -> float:
    """O(n^2) pairwise AUC: full credit for correct order, half for ties."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    total = 0.0
    for i in pos:
        for j in neg:
            if scores[i] > scores[j]:
                total += 1.0
            elif scores[i] == scores[j]:
                total += 0.5
    return total / (len(pos) * len(neg))


def make_schema(vocab_sizes=(4, 3, 5), n_users: int = 6) -> FeatureSchema:
    """Small throwaway schema; vocab_sizes count real tokens (MISSING added)."""
    fields = tuple(
        FeatureField(f"f{i}", ("",) + tuple(f"f{i}_v{j}" for j in range(v)))
        for i, v in enumerate(vocab_sizes)
    )
    user_vocab = ("",) + tuple(f"u{i}" for i in range(n_users))
    return FeatureSchema(features=fields, user_vocab=user_vocab, user_feature=None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_schema():
    return make_schema()
