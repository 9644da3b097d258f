"""Rank statistics and temperature calibration across models.

Calibration picks the single temperature that makes the ranking of
per-model mean scores agree best (Spearman) with a reference ranking,
typically mean attack distortions. Per-sample logits are cached; each
grid temperature reruns only the outer output map and the mean, through
:func:`greatscore.kernels.grid_means`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .errors import InvalidInput
from .transform import MIN_TEMPERATURE, TransformConfig, inner_map

NO_CORRELATION = -math.inf


@dataclass(frozen=True)
class RankSeries:
    """Values keyed by model name, in a fixed key order."""

    keys: tuple
    values: tuple

    def __post_init__(self):
        keys = tuple(str(k) for k in self.keys)
        values = tuple(float(v) for v in self.values)
        if len(keys) != len(values):
            raise InvalidInput("rank series needs one value per key")
        if len(set(keys)) != len(keys):
            raise InvalidInput("rank series keys must be unique")
        if not all(math.isfinite(v) for v in values):
            raise InvalidInput("rank series values must be finite")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "RankSeries":
        return cls(tuple(data), tuple(data.values()))

    def aligned(self, keys: Sequence[str]) -> np.ndarray:
        lookup = dict(zip(self.keys, self.values))
        if set(keys) != set(lookup):
            raise InvalidInput("rank series have different keys")
        return np.array([lookup[k] for k in keys])

    def __len__(self):
        return len(self.keys)


def _pearson_of_ranks(ra: np.ndarray, rb: np.ndarray) -> float:
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        raise InvalidInput("Spearman correlation is undefined for a constant series")
    return max(-1.0, min(1.0, float(da @ db) / denom))


def spearman(a, b) -> float:
    """Spearman's rho with average ranks for ties.

    Accepts two :class:`RankSeries` (aligned by key) or two plain sequences.
    """
    if isinstance(a, RankSeries) and isinstance(b, RankSeries):
        xa = np.array(a.values)
        xb = b.aligned(a.keys)
    else:
        xa = np.asarray(a, dtype=np.float64)
        xb = np.asarray(b, dtype=np.float64)
    if xa.shape != xb.shape or xa.ndim != 1:
        raise InvalidInput("series must be one-dimensional and of equal length")
    if xa.size < 2:
        raise InvalidInput("need at least two entries for a rank correlation")
    return _pearson_of_ranks(rankdata(xa), rankdata(xb))


def spearman_rows(matrix: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Spearman's rho of every row of ``matrix`` against ``reference``.

    Rows that are constant get :data:`NO_CORRELATION`.
    """
    ranks = rankdata(matrix, axis=1)
    ref = rankdata(reference)
    ref = ref - ref.mean()
    centred = ranks - ranks.mean(axis=1, keepdims=True)
    row_ss = (centred ** 2).sum(axis=1)
    denom = np.sqrt(row_ss * float(ref @ ref))
    if float(ref @ ref) == 0.0:
        raise InvalidInput("reference series is constant")
    out = np.full(matrix.shape[0], NO_CORRELATION)
    ok = row_ss > 0
    out[ok] = np.clip((centred[ok] @ ref) / denom[ok], -1.0, 1.0)
    return out


@dataclass(frozen=True)
class ModelLogits:
    """One model's logits on the shared calibration sample set."""

    name: str
    ids: tuple
    labels: np.ndarray = field(compare=False)
    logits: np.ndarray = field(compare=False)

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.intp)
        if logits.ndim != 2 or logits.shape[1] < 2:
            raise InvalidInput(f"model {self.name!r}: logits must have shape (n, K>=2)")
        if labels.shape != (logits.shape[0],) or len(self.ids) != logits.shape[0]:
            raise InvalidInput(f"model {self.name!r}: need one id and label per logit row")
        if not np.all(np.isfinite(logits)):
            raise InvalidInput(f"model {self.name!r}: logits must be finite")
        if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
            raise InvalidInput(f"model {self.name!r}: label out of range")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "logits", logits)


@dataclass(frozen=True)
class CalibrationResult:
    best_config: TransformConfig
    best_rho: float
    trace: tuple  # ((temperature, rho), ...) in grid order

    def to_dict(self, stride: int = 1) -> dict:
        trace = self.trace[::stride]
        return {
            "best_config": self.best_config.to_dict(),
            "best_rho": self.best_rho,
            "trace": [[t, None if r == NO_CORRELATION else r] for t, r in trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationResult":
        trace = tuple((float(t), NO_CORRELATION if r is None else float(r)) for t, r in data["trace"])
        return cls(TransformConfig.from_dict(data["best_config"]), float(data["best_rho"]), trace)


def temperature_grid(lo: float = 0.0, hi: float = 2.0, step: float = 1e-5) -> np.ndarray:
    """Inclusive grid ``lo, lo + step, ..., hi``; temperatures below the
    admissible minimum are raised to it."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo or lo < 0:
        raise InvalidInput(f"invalid grid range [{lo}, {hi}]")
    if hi == lo:
        temps = np.array([lo])
    else:
        if not step > 0:
            raise InvalidInput("grid step must be positive")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        per_unit = round(1.0 / step)
        offset = round(lo / step)
        if abs(per_unit * step - 1.0) < 1e-12 and abs(offset * step - lo) < 1e-12:
            # decimal steps: i / 100000 is correctly rounded, so 1.0 lands exactly on the grid
            temps = (offset + np.arange(count)) / per_unit
        else:
            temps = lo + step * np.arange(count)
        temps[-1] = min(temps[-1], hi)
    temps = np.maximum(temps, MIN_TEMPERATURE)
    if temps.size == 0:
        raise InvalidInput("empty temperature grid")
    return temps


def _stack(models: Sequence[ModelLogits]):
    if len(models) < 2:
        raise InvalidInput("calibration needs at least two models")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise InvalidInput("model names must be unique")
    first = models[0]
    for m in models[1:]:
        if m.ids != first.ids or not np.array_equal(m.labels, first.labels):
            raise InvalidInput(f"model {m.name!r} was not evaluated on the same labelled sample set")
        if m.logits.shape != first.logits.shape:
            raise InvalidInput(f"model {m.name!r} has logits of shape {m.logits.shape}, expected {first.logits.shape}")
    return names, np.stack([m.logits for m in models]), first.labels


def model_means(models: Sequence[ModelLogits], mode: str, temps) -> np.ndarray:
    """Mean local score of every model at every temperature, shape (G, M)."""
    names, logits, labels = _stack(models)
    inner, outer = inner_map(logits, mode)
    return kernels.grid_means(inner, labels, np.asarray(temps, dtype=np.float64), outer)


def calibrate(models: Sequence[ModelLogits], reference: RankSeries, mode: str = "softmax-after-sigmoid",
              lo: float = 0.0, hi: float = 2.0, step: float = 1e-5,
              block: int = 4096) -> CalibrationResult:
    """Grid-search the swept temperature of ``mode`` for the best Spearman rho.

    Ties between grid maximisers go to the smallest temperature. Grid
    points whose per-model means are all equal record ``-inf`` and are
    never selected.
    """
    names, _, _ = _stack(models)
    ref = reference.aligned(names)
    temps = temperature_grid(lo, hi, step)
    rhos = np.empty(temps.size)
    for start in range(0, temps.size, block):
        means = model_means(models, mode, temps[start:start + block])
        rhos[start:start + block] = spearman_rows(means, ref)
    if np.all(rhos == NO_CORRELATION):
        raise InvalidInput("model scores are identical at every grid temperature")
    best = int(np.argmax(rhos))  # first maximiser == smallest temperature
    config = TransformConfig(mode).with_temperature(float(temps[best]))
    trace = tuple(zip(temps.tolist(), rhos.tolist()))
    return CalibrationResult(config, float(rhos[best]), trace)


@dataclass(frozen=True)
class RankMatrix:
    names: tuple
    matrix: tuple  # rows of floats

    def value(self, a: str, b: str) -> float:
        return self.matrix[self.names.index(a)][self.names.index(b)]


def rank_report(metrics: Mapping[str, RankSeries]) -> RankMatrix:
    """Pairwise Spearman coefficients between named metric columns."""
    names = tuple(metrics)
    if len(names) < 2:
        raise InvalidInput("need at least two metric series")
    n = len(names)
    mat = [[1.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            mat[i][j] = mat[j][i] = spearman(metrics[names[i]], metrics[names[j]])
    return RankMatrix(names, tuple(tuple(r) for r in mat))
