"""Ground-truth perturbation oracles for affine classifiers.

For an affine classifier the smallest L2 perturbation that moves the
decision from class ``c`` to ``k`` is the distance to the hyperplane
``(w_c - w_k) . x + (b_c - b_k) = 0``. Every transform is monotone per
coordinate, so decisions are read from the logits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidInput
from ..rng import SeedLike, stream
from ..score import GlobalEstimate, draw_samples, great_score_mean
from ..transform import TransformConfig
from .models import AffineModel, GeneratorSpec, SamplePoint

LIPSCHITZ_BOUND = math.sqrt(2.0 / math.pi)

EXACT = "exact"
ATTACK = "attack-upper-bound"
UNBOUNDED = "unbounded"
NO_FLIP = "no-flip-found"


@dataclass(frozen=True)
class MinPerturbationResult:
    """Minimal perturbation found for one sample.

    ``delta_min`` is ``None`` for ``unbounded`` results. For ``no-flip-found``
    it holds the largest radius tried without a flip.
    """

    delta_min: Optional[float]
    flip_class: Optional[int]
    kind: str

    @property
    def found(self) -> bool:
        return self.kind in (EXACT, ATTACK)


def exact_min_perturbation(model: AffineModel, x: SamplePoint) -> MinPerturbationResult:
    logits = model(x.x)
    c = x.label
    if not 0 <= c < model.num_classes:
        raise InvalidInput(f"label {c} out of range")
    others = np.delete(np.arange(model.num_classes), c)
    if logits[c] <= logits[others].max():
        k = int(others[np.argmax(logits[others])])
        return MinPerturbationResult(0.0, k, EXACT)
    best, best_k = math.inf, None
    for k in others:
        dw = model.W[c] - model.W[k]
        norm = float(np.sqrt(dw @ dw))
        if norm == 0.0:
            continue
        dist = float((logits[c] - logits[k]) / norm)
        if dist < best:
            best, best_k = dist, int(k)
    if best_k is None:
        return MinPerturbationResult(None, None, UNBOUNDED)
    return MinPerturbationResult(best, best_k, EXACT)


def exact_min_perturbation_batch(model: AffineModel, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorised exact oracle; unbounded samples come back as ``inf``."""
    logits = model(x)
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.intp)
    rows = np.arange(n)
    own = logits[rows, labels]
    gaps = own[:, None] - logits
    dw = model.W[labels][:, None, :] - model.W[None, :, :]
    norms = np.sqrt((dw ** 2).sum(axis=-1))
    gaps[rows, labels] = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(norms > 0, gaps / np.where(norms > 0, norms, 1.0), np.inf)
    dist[rows, labels] = np.inf
    out = dist.min(axis=1)
    out[gaps.min(axis=1) <= 0] = 0.0
    return out


def make_lipschitz_bounded(model: AffineModel) -> AffineModel:
    """Shrink ``model`` until every row-difference norm is at most sqrt(2/pi).

    Logits are rescaled around 0.5 (``l -> 0.5 + s (l - 0.5)``) and the
    output is clipped to [0, 1], so ``sqrt(pi/2) * gap`` never exceeds the
    exact minimal perturbation.
    """
    norm = model.max_row_gap_norm()
    if norm == 0.0:
        raise InvalidInput("all rows of W are identical; there is no decision boundary")
    s = 1.0 if norm <= LIPSCHITZ_BOUND else LIPSCHITZ_BOUND / norm
    while True:
        W = s * model.W
        b = 0.5 + s * (model.b - 0.5)
        out = AffineModel(W, b, TransformConfig("identity-clip"))
        if out.max_row_gap_norm() <= LIPSCHITZ_BOUND:
            return out
        s = math.nextafter(s, 0.0)


def certified_radius_from_lipschitz(gap: float, L: float) -> float:
    if not L > 0:
        raise InvalidInput(f"Lipschitz constant must be positive, got {L!r}")
    if gap < 0:
        raise InvalidInput(f"gap must be non-negative, got {gap!r}")
    return gap / L


def _strict_top(outputs: np.ndarray, label: int) -> np.ndarray:
    """Boolean per row: ``label`` is the strict argmax."""
    others = np.delete(outputs, label, axis=-1)
    return outputs[..., label] > others.max(axis=-1)


def attack_min_perturbation(classifier, x: SamplePoint, budget: int = 20000, seed: SeedLike = 0,
                            max_radius: float = 1e3, tol: float = 1e-7,
                            random_directions: int = 64) -> MinPerturbationResult:
    """Gradient-free upper bound on the minimal L2 perturbation.

    Candidate directions are the coordinate axes (both signs), random unit
    vectors and, for affine classifiers, the exact hyperplane normals. For
    each the flip radius is bracketed by doubling, the best direction is
    bisected, and the returned radius is re-checked to flip the top-1 class.
    ``budget`` bounds the number of classifier evaluations.
    """
    evals = 0

    def flips(points):
        nonlocal evals
        evals += len(points)
        return ~_strict_top(np.asarray(classifier(points), dtype=np.float64), x.label)

    if flips(x.x[None])[0]:
        return MinPerturbationResult(0.0, None, ATTACK)
    d = x.x.size
    rng = stream(seed)
    dirs = [np.eye(d), -np.eye(d), rng.standard_normal((random_directions, d))]
    if isinstance(classifier, AffineModel):
        normals = classifier.W - classifier.W[x.label]
        normals = np.delete(normals, x.label, axis=0)
        dirs.append(normals[np.linalg.norm(normals, axis=1) > 0])
    dirs = np.concatenate(dirs)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    # Double a common radius until some direction flips. Directions that
    # flip first are bracketed in (r/2, r]; the rest cannot do better.
    r = 1e-6
    hit = np.zeros(len(dirs), dtype=bool)
    while r <= max_radius and evals + len(dirs) <= budget:
        hit = flips(x.x + r * dirs)
        if hit.any():
            break
        r *= 2.0
    if not hit.any():
        return MinPerturbationResult(r / 2.0, None, NO_FLIP)

    best_r, best_dir = np.inf, None
    for j in np.flatnonzero(hit):
        lo_r, hi_r = (r / 2.0 if r > 1e-6 else 0.0), r
        while hi_r - lo_r > tol and evals < budget:
            mid = 0.5 * (lo_r + hi_r)
            if flips((x.x + mid * dirs[j])[None])[0]:
                hi_r = mid
            else:
                lo_r = mid
        if hi_r < best_r:
            best_r, best_dir = hi_r, dirs[j]
    adv = x.x + best_r * best_dir
    out = np.asarray(classifier(adv[None]), dtype=np.float64)[0]
    if _strict_top(out, x.label):
        raise AssertionError("attack produced an unverified perturbation")
    others = np.delete(np.arange(out.size), x.label)
    flip = int(others[np.argmax(out[others])])
    return MinPerturbationResult(float(np.linalg.norm(adv - x.x)), flip, ATTACK)


def true_global_robustness_oracle(gen: GeneratorSpec, model: AffineModel, n: int, seed: SeedLike,
                                  labels="uniform") -> GlobalEstimate:
    """Mean exact minimal perturbation over the draws ``run_great_score`` uses."""
    y, x = draw_samples(gen, n, seed, labels)
    if model.num_classes != gen.num_classes:
        raise InvalidInput("model and generator disagree on the number of classes")
    d = exact_min_perturbation_batch(model, x, y)
    if np.isinf(d).any():
        raise InvalidInput("some samples can never be flipped; the global robustness is unbounded")
    return great_score_mean(d)
