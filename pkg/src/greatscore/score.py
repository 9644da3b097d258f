"""Local and global GREAT scores, the sample-size planner and RA curves.

The local score of a prediction ``f`` for true class ``c`` is::

    g = sqrt(pi / 2) * max(f_c - max_{k != c} f_k, 0)

and the global estimate is the plain sample mean of ``g`` over draws from a
class-conditional generator. Means are reduced with :func:`math.fsum`,
which is exactly rounded and therefore independent of summation order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import InvalidInput, RunAborted
from .rng import SeedLike, stream
from .transform import TransformConfig, apply_transform

if TYPE_CHECKING:
    from .lab.models import GeneratorSpec

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
PLANNER_CONSTANT = 32.0 * math.e
DEFAULT_CHUNK = 512

ClassifierHandle = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PredictionVector:
    """K class confidences, each finite and inside [0, 1]; no sum constraint."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise InvalidInput("a prediction needs at least two class confidences")
        for v in vals:
            if not (0.0 <= v <= 1.0):
                raise InvalidInput(f"confidence {v!r} is not a finite value in [0, 1]")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class LabeledPrediction:
    id: str
    label: int
    prediction: PredictionVector

    def __post_init__(self):
        if not isinstance(self.label, (int, np.integer)) or not 0 <= self.label < len(self.prediction):
            raise InvalidInput(f"label {self.label!r} out of range for {len(self.prediction)} classes in record {self.id!r}")


@dataclass(frozen=True)
class Guarantee:
    epsilon: float
    delta: float


@dataclass(frozen=True)
class GlobalEstimate:
    mean: float
    count: int
    guarantee: Optional[Guarantee] = None

    def to_dict(self) -> dict:
        g = None if self.guarantee is None else {"epsilon": self.guarantee.epsilon, "delta": self.guarantee.delta}
        return {"mean": self.mean, "count": self.count, "guarantee": g}

    @classmethod
    def from_dict(cls, data: dict) -> "GlobalEstimate":
        g = data.get("guarantee")
        return cls(float(data["mean"]), int(data["count"]), None if g is None else Guarantee(float(g["epsilon"]), float(g["delta"])))


@dataclass(frozen=True)
class SamplePlan:
    epsilon: float
    delta: float
    n: int


@dataclass(frozen=True)
class RadiusCurve:
    radii: tuple
    certified_fraction: tuple

    def points(self):
        return list(zip(self.radii, self.certified_fraction))


def check_confidences(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise InvalidInput(f"expected an (n, K>=2) confidence array, got shape {probs.shape}")
    bad = ~((probs >= 0.0) & (probs <= 1.0))
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise InvalidInput(f"confidences of row {row} are not finite values in [0, 1]")
    return probs


def local_great_score(prediction, label: int) -> float:
    """Certified local radius of one prediction."""
    if not isinstance(prediction, PredictionVector):
        prediction = PredictionVector(tuple(prediction))
    if not 0 <= label < len(prediction):
        raise InvalidInput(f"label {label} out of range for {len(prediction)} classes")
    vals = prediction.values
    best_other = max(v for k, v in enumerate(vals) if k != label)
    return SQRT_HALF_PI * max(vals[label] - best_other, 0.0)


def local_scores(probs, labels) -> np.ndarray:
    """Vectorised :func:`local_great_score` over rows of ``probs``."""
    probs = check_confidences(probs)
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise InvalidInput("need exactly one label per prediction row")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise InvalidInput("label out of range")
    return kernels.local_scores(probs, labels.astype(np.intp))


def great_score_mean(scores) -> GlobalEstimate:
    scores = [float(s) for s in scores]
    if not scores:
        raise InvalidInput("empty sample set")
    return GlobalEstimate(math.fsum(scores) / len(scores), len(scores))


def draw_samples(generator: GeneratorSpec, n: int, seed: SeedLike,
                 labels: Union[str, Sequence[int]] = "uniform"):
    """Labels and inputs for one scoring run.

    The stream for ``seed`` first yields the labels (``uniform``: one
    ``integers(0, K)`` draw per sample; ``stratified``: a permutation of
    ``i mod K``), then all latents as one ``(n, m)`` standard-normal block.
    An explicit label sequence skips the label draw.
    """
    if n < 1:
        raise InvalidInput("n must be at least 1")
    rng = stream(seed)
    k = generator.num_classes
    if isinstance(labels, str):
        if labels == "uniform":
            y = rng.integers(0, k, size=n)
        elif labels == "stratified":
            y = rng.permutation(np.arange(n) % k)
        else:
            raise InvalidInput(f"unknown label mode {labels!r}")
    else:
        y = np.asarray(labels, dtype=np.int64)
        if y.shape != (n,):
            raise InvalidInput("fixed label sequence must have length n")
    z = rng.standard_normal((n, generator.latent_dim))
    return y, generator.generate(y, z)


def evaluate(classifier: ClassifierHandle, x: np.ndarray, transform: Optional[TransformConfig],
             jobs: int = 1, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Run ``classifier`` over ``x`` in fixed-size chunks and apply ``transform``.

    Chunk boundaries do not depend on ``jobs``, so results are identical
    for every worker count. With ``transform=None`` the classifier must
    already return confidences.
    """
    chunks = [x[i:i + chunk_size] for i in range(0, len(x), chunk_size)]
    outputs = []
    done = 0
    try:
        if jobs > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for out in pool.map(classifier, chunks):
                    outputs.append(np.asarray(out, dtype=np.float64))
                    done += len(out)
        else:
            for chunk in chunks:
                outputs.append(np.asarray(classifier(chunk), dtype=np.float64))
                done += len(chunk)
    except InvalidInput:
        raise
    except Exception as exc:
        aborted = RunAborted(f"classifier failed after {done} of {len(x)} samples: {exc}", done, len(x))
        aborted.partial_outputs = outputs
        raise aborted from exc
    raw = np.concatenate(outputs, axis=0)
    if raw.shape[0] != len(x):
        raise InvalidInput(f"classifier returned {raw.shape[0]} rows for {len(x)} inputs")
    if transform is not None:
        return apply_transform(raw, transform)
    return check_confidences(raw)


def sample_scores(generator: GeneratorSpec, classifier: ClassifierHandle,
                  transform: Optional[TransformConfig], n: int, seed: SeedLike, *,
                  labels="uniform", jobs: int = 1, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Per-sample local scores for the draws of :func:`draw_samples`."""
    y, x = draw_samples(generator, n, seed, labels)
    try:
        probs = evaluate(classifier, x, transform, jobs, chunk_size)
    except RunAborted as exc:
        if exc.completed:
            raw = np.concatenate(exc.partial_outputs, axis=0)
            try:
                partial = apply_transform(raw, transform) if transform is not None else check_confidences(raw)
                exc.partial_mean = great_score_mean(local_scores(partial, y[:exc.completed])).mean
            except InvalidInput:
                pass
        raise
    if probs.shape[1] != generator.num_classes:
        raise InvalidInput(f"classifier has {probs.shape[1]} classes but the generator has {generator.num_classes}")
    return local_scores(probs, y)


def run_great_score(generator: GeneratorSpec, classifier: ClassifierHandle,
                    transform: Optional[TransformConfig], n: int, seed: SeedLike, *,
                    labels="uniform", jobs: int = 1, chunk_size: int = DEFAULT_CHUNK) -> GlobalEstimate:
    """Sample ``n`` labelled points, score them and average."""
    return great_score_mean(sample_scores(generator, classifier, transform, n, seed,
                                          labels=labels, jobs=jobs, chunk_size=chunk_size))


def _plan_holds(epsilon: float, delta: float, n: int) -> bool:
    return 2.0 * math.exp(-epsilon * epsilon * n / PLANNER_CONSTANT) <= delta


def sample_complexity(epsilon: float, delta: float, radius_units: bool = False) -> SamplePlan:
    """Smallest n with ``2 exp(-eps^2 n / 32e) <= delta``.

    ``epsilon`` is in normalised gap units (scores divided by
    ``sqrt(pi/2)``). Pass ``radius_units=True`` to give it in radius units
    instead; it is then divided by ``sqrt(pi/2)`` before planning.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise InvalidInput(f"epsilon must be positive, got {epsilon!r}")
    if not 0 < delta < 1:
        raise InvalidInput(f"delta must lie in (0, 1), got {delta!r}")
    eps = epsilon / SQRT_HALF_PI if radius_units else epsilon
    n = max(1, math.ceil(PLANNER_CONSTANT * math.log(2.0 / delta) / (eps * eps)))
    # absorb rounding in the closed form so the returned n is the tight ceiling
    while not _plan_holds(eps, delta, n):
        n += 1
    while n > 1 and _plan_holds(eps, delta, n - 1):
        n -= 1
    return SamplePlan(float(epsilon), float(delta), n)


def achieved_epsilon(n: int, delta: float) -> float:
    """Normalised epsilon guaranteed by ``n`` samples at confidence ``delta``."""
    if n < 1 or not 0 < delta < 1:
        raise InvalidInput("need n >= 1 and delta in (0, 1)")
    return math.sqrt(PLANNER_CONSTANT * math.log(2.0 / delta) / n)


def cumulative_certified_ra(scores, radii) -> RadiusCurve:
    """Fraction of scores strictly greater than each radius."""
    s = np.sort(np.asarray(scores, dtype=np.float64))
    r = np.asarray(radii, dtype=np.float64)
    if s.size == 0:
        raise InvalidInput("empty sample set")
    if r.ndim != 1 or r.size == 0:
        raise InvalidInput("radii must be a non-empty sequence")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise InvalidInput("radii must be finite and non-negative")
    if np.any(np.diff(r) <= 0):
        raise InvalidInput("radii must be strictly increasing")
    above = s.size - np.searchsorted(s, r, side="right")
    return RadiusCurve(tuple(float(v) for v in r), tuple(float(c) / s.size for c in above))


def score_stability_sweep(generator, classifier, transform, n_values, repeats: int, seed: int,
                          jobs: int = 1):
    """Mean and sample standard deviation of repeated estimates per n.

    Repeat ``r`` at sample size ``n`` uses the derived seed ``(seed, n, r)``.
    Returns a list of ``(n, mean_of_means, std_of_means)`` rows.
    """
    if repeats < 2:
        raise InvalidInput("repeats must be at least 2 for a standard deviation")
    rows = []
    for n in n_values:
        means = [run_great_score(generator, classifier, transform, int(n), [seed, int(n), r], jobs=jobs).mean
                 for r in range(repeats)]
        arr = np.array(means)
        rows.append((int(n), math.fsum(means) / repeats, float(arr.std(ddof=1))))
    return rows
