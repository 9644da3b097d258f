"""Output layers that turn raw logits into confidences in [0, 1].

Temperatures divide the logits (``l / T``), so ``T < 1`` sharpens and
``T > 1`` flattens. Composite modes run the inner map at temperature 1 and
the outer map at the configured temperature:

==========================  =========================================
mode                        map
==========================  =========================================
``identity-clip``           ``clip(l, 0, 1)``
``sigmoid-T``               ``sigmoid(l / t1)``
``softmax-T``               ``softmax(l / t2)``
``sigmoid-after-softmax``   ``sigmoid(softmax(l) / t1)``
``softmax-after-sigmoid``   ``softmax(sigmoid(l) / t2)``
==========================  =========================================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax

from .errors import InvalidInput

MODES = (
    "identity-clip",
    "sigmoid-T",
    "softmax-T",
    "sigmoid-after-softmax",
    "softmax-after-sigmoid",
)
MIN_TEMPERATURE = 1e-5

# which temperature a calibration grid sweeps for each mode
SWEPT_TEMPERATURE = {
    "sigmoid-T": "t1",
    "softmax-T": "t2",
    "sigmoid-after-softmax": "t1",
    "softmax-after-sigmoid": "t2",
}


@dataclass(frozen=True)
class TransformConfig:
    mode: str = "identity-clip"
    t1: float = 1.0
    t2: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInput(f"unknown transform mode {self.mode!r}; expected one of {MODES}")
        for name in ("t1", "t2"):
            t = getattr(self, name)
            if not np.isfinite(t) or t <= 0:
                raise InvalidInput(f"{name} must be a positive finite temperature, got {t!r}")
            if t < MIN_TEMPERATURE:
                raise InvalidInput(f"{name}={t!r} is below the minimum temperature {MIN_TEMPERATURE}")
        object.__setattr__(self, "t1", float(self.t1))
        object.__setattr__(self, "t2", float(self.t2))

    def with_temperature(self, t: float) -> "TransformConfig":
        """Copy with the mode's swept temperature replaced by ``t``."""
        field = SWEPT_TEMPERATURE.get(self.mode)
        if field is None:
            raise InvalidInput(f"mode {self.mode!r} has no temperature")
        return TransformConfig(self.mode, **{"t1": self.t1, "t2": self.t2, field: t})

    def to_dict(self) -> dict:
        return {"mode": self.mode, "t1": self.t1, "t2": self.t2}

    @classmethod
    def from_dict(cls, data: dict) -> "TransformConfig":
        unknown = set(data) - {"mode", "t1", "t2"}
        if unknown:
            raise InvalidInput(f"unknown transform fields: {sorted(unknown)}")
        return cls(data.get("mode", "identity-clip"), data.get("t1", 1.0), data.get("t2", 1.0))


def apply_transform(logits, config: TransformConfig) -> np.ndarray:
    """Map logits of shape ``(..., K)`` to confidences of the same shape."""
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise InvalidInput("logits need a trailing class axis with K >= 2")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("logits must be finite")
    mode = config.mode
    if mode == "identity-clip":
        return np.clip(x, 0.0, 1.0)
    if mode == "sigmoid-T":
        return expit(x / config.t1)
    if mode == "softmax-T":
        return softmax(x / config.t2, axis=-1)
    if mode == "sigmoid-after-softmax":
        return expit(softmax(x, axis=-1) / config.t1)
    return softmax(expit(x) / config.t2, axis=-1)


def inner_map(logits: np.ndarray, mode: str) -> tuple[np.ndarray, str]:
    """Split a mode into its temperature-free inner map and its outer map.

    Returns ``(inner_values, outer)`` with ``outer`` in ``{"sigmoid",
    "softmax"}``. Calibration caches ``inner_values`` once and only reruns
    the outer map per grid temperature.
    """
    x = np.asarray(logits, dtype=np.float64)
    if mode == "sigmoid-T":
        return x, "sigmoid"
    if mode == "softmax-T":
        return x, "softmax"
    if mode == "sigmoid-after-softmax":
        return softmax(x, axis=-1), "sigmoid"
    if mode == "softmax-after-sigmoid":
        return expit(x), "softmax"
    raise InvalidInput(f"mode {mode!r} has no temperature to calibrate")
