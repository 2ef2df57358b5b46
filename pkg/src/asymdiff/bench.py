"""Micro-benchmark for the two single-example serving paths.

Rounds alternate between the plain path and the denoising path so clock drift
hits both equally; per-round wall times are summarized by their median.
"""

from __future__ import annotations

import time

import numpy as np

from . import model as M
from .features import Sample
from .training import base_predict, serve_predict


def serving_overhead(params: M.ModelParams, samples: list[Sample], repeats: int = 30,
                     warmup: int = 2) -> dict:
    """Median per-call latency of base_predict vs serve_predict on `samples`.

    Returns base/serve milliseconds per call and the relative overhead percent.
    """
    base_rounds = []
    serve_rounds = []
    for r in range(warmup + repeats):
        t0 = time.perf_counter()
        for s in samples:
            base_predict(params, s)
        t1 = time.perf_counter()
        for s in samples:
            serve_predict(params, s)
        t2 = time.perf_counter()
        if r >= warmup:
            base_rounds.append(t1 - t0)
            serve_rounds.append(t2 - t1)
    base_ms = float(np.median(base_rounds) / len(samples) * 1e3)
    serve_ms = float(np.median(serve_rounds) / len(samples) * 1e3)
    return {
        "base_ms_per_call": base_ms,
        "serve_ms_per_call": serve_ms,
        "overhead_pct": (serve_ms / base_ms - 1.0) * 100.0,
        "n_samples": len(samples),
        "repeats": repeats,
    }
