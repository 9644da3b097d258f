"""Affine generators and affine classifiers with closed-form oracles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput
from ..rng import SeedLike, stream
from ..transform import TransformConfig, apply_transform


def _matrix(value, name) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _vector(value, name) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"{name} must be a vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Class-conditional affine Gaussian generator ``x = A_y z + mu_y``."""

    A: tuple
    mu: tuple

    def __post_init__(self):
        if len(self.A) != len(self.mu) or len(self.A) < 1:
            raise InvalidInput("generator needs one (A, mu) pair per class")
        A = tuple(_matrix(a, f"A[{i}]") for i, a in enumerate(self.A))
        mu = tuple(_vector(m, f"mu[{i}]") for i, m in enumerate(self.mu))
        shape = A[0].shape
        for i, (a, m) in enumerate(zip(A, mu)):
            if a.shape != shape:
                raise InvalidInput(f"A[{i}] has shape {a.shape}, expected {shape}")
            if m.shape != (shape[0],):
                raise InvalidInput(f"mu[{i}] has length {m.shape[0]}, expected {shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def identity(cls, d: int, num_classes: int, means=None) -> "GeneratorSpec":
        eye = np.eye(d)
        if means is None:
            means = [np.zeros(d)] * num_classes
        return cls(tuple(eye for _ in range(num_classes)), tuple(means))

    @property
    def num_classes(self) -> int:
        return len(self.A)

    @property
    def dim(self) -> int:
        return self.A[0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.A[0].shape[1]

    def generate(self, labels: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Push latents ``z`` (n, m) through the generator for ``labels``."""
        labels = np.asarray(labels)
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (labels.size, self.latent_dim):
            raise InvalidInput(f"latents have shape {z.shape}, expected ({labels.size}, {self.latent_dim})")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidInput("label out of range for generator")
        x = np.empty((labels.size, self.dim))
        for y in range(self.num_classes):
            idx = np.flatnonzero(labels == y)
            if idx.size:
                x[idx] = z[idx] @ self.A[y].T + self.mu[y]
        return x

    def to_dict(self) -> dict:
        return {"classes": [{"A": a.tolist(), "mu": m.tolist()} for a, m in zip(self.A, self.mu)]}

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        try:
            classes = data["classes"]
            return cls(tuple(c["A"] for c in classes), tuple(c["mu"] for c in classes))
        except (KeyError, TypeError) as exc:
            raise InvalidInput(f"malformed generator spec: {exc}") from exc


@dataclass(frozen=True)
class SamplePoint:
    id: str
    x: np.ndarray = field(compare=False)
    label: int

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64).ravel()
        if not np.all(np.isfinite(x)):
            raise InvalidInput(f"sample {self.id!r} has non-finite coordinates")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "label", int(self.label))


def generate_sample(gen: GeneratorSpec, label: int, seed: SeedLike, sample_id: str = "0") -> SamplePoint:
    """Draw ``z`` from the seed's stream and return ``A_label z + mu_label``."""
    if not 0 <= label < gen.num_classes:
        raise InvalidInput(f"label {label} out of range for {gen.num_classes} classes")
    z = stream(seed).standard_normal(gen.latent_dim)
    x = gen.A[label] @ z + gen.mu[label]
    return SamplePoint(sample_id, x, label)


@dataclass(frozen=True, eq=False)
class AffineModel:
    """Classifier ``x -> transform(W x + b)``.

    Calling the model returns raw logits, so it can be used as a
    classifier handle together with an explicit transform; ``predict``
    applies the model's own transform.
    """

    W: np.ndarray
    b: np.ndarray
    transform: TransformConfig = TransformConfig()

    def __post_init__(self):
        W = _matrix(self.W, "W")
        b = _vector(self.b, "b")
        if W.shape[0] < 2:
            raise InvalidInput("an affine classifier needs K >= 2 rows")
        if b.shape[0] != W.shape[0]:
            raise InvalidInput("b must have one entry per row of W")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise InvalidInput(f"input dimension {x.shape[-1]} does not match model dimension {self.dim}")
        return x @ self.W.T + self.b

    def predict(self, x) -> np.ndarray:
        return apply_transform(self(x), self.transform)

    def max_row_gap_norm(self) -> float:
        diffs = self.W[:, None, :] - self.W[None, :, :]
        return float(np.sqrt((diffs ** 2).sum(axis=-1)).max())

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "b": self.b.tolist(), "transform": self.transform.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "AffineModel":
        try:
            transform = TransformConfig.from_dict(data.get("transform", {}))
            return cls(data["W"], data["b"], transform)
        except (KeyError, TypeError) as exc:
            raise InvalidInput(f"malformed affine model: {exc}") from exc
