"""numpy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
extension is unavailable or ``GREATSCORE_PURE=1`` is set.
"""
import math

import numpy as np
from scipy.special import expit

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
_CHUNK_ELEMS = 1 << 22


def _label_and_best_other(values, labels):
    # values (..., N, K); labels (N,)
    idx = np.arange(values.shape[-2])
    label_vals = values[..., idx, labels]
    masked = values.copy()
    masked[..., idx, labels] = -np.inf
    return label_vals, masked.max(axis=-1)


def local_scores(probs, labels):
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.intp)
    own, other = _label_and_best_other(probs, labels)
    gap = own - other
    return SQRT_HALF_PI * np.where(gap > 0.0, gap, 0.0)


def grid_means(inner, labels, temps, outer):
    """Mean local score per (temperature, model).

    ``inner`` has shape (M, N, K): the temperature-free inner map applied
    to every model's logits on a shared sample set with labels (N,).
    Returns an array of shape (G, M).
    """
    inner = np.ascontiguousarray(inner, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.intp)
    temps = np.ascontiguousarray(temps, dtype=np.float64)
    m, n, k = inner.shape
    out = np.empty((temps.size, m))
    if outer == "sigmoid":
        own, other = _label_and_best_other(inner, labels)
        step = max(1, _CHUNK_ELEMS // max(1, m * n))
        for lo in range(0, temps.size, step):
            t = temps[lo:lo + step, None, None]
            gap = expit(own / t) - expit(other / t)
            out[lo:lo + step] = SQRT_HALF_PI * np.where(gap > 0.0, gap, 0.0).sum(axis=-1) / n
    elif outer == "softmax":
        shifted = inner - inner.max(axis=-1, keepdims=True)
        own, other = _label_and_best_other(shifted, labels)
        step = max(1, _CHUNK_ELEMS // max(1, m * n * k))
        for lo in range(0, temps.size, step):
            t = temps[lo:lo + step]
            denom = np.exp(shifted[None] / t[:, None, None, None]).sum(axis=-1)
            tt = t[:, None, None]
            gap = np.exp(own / tt) / denom - np.exp(other / tt) / denom
            out[lo:lo + step] = SQRT_HALF_PI * np.where(gap > 0.0, gap, 0.0).sum(axis=-1) / n
    else:
        raise ValueError(f"unknown outer map {outer!r}")
    return out
