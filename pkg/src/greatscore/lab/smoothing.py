"""Monte-Carlo Gaussian smoothing of [0, 1]-valued functions.

``H(x) = E[h(x + sigma * zeta)]`` with ``zeta ~ N(0, I)`` is
``sqrt(2 / (pi sigma^2))``-Lipschitz in L2 whatever ``h`` is, and its
gradient has the Gaussian-weighted form ``E[zeta h(x + sigma zeta)] / sigma``.

Function handles take a batch of points with shape (n, d) and return n
values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInput
from ..rng import SeedLike, seed_sequence, stream


@dataclass(frozen=True)
class LipschitzCheckReport:
    max_observed_ratio: float
    bound: float
    pairs_tested: int
    mc_samples: int
    slack: float
    ratios: tuple = ()
    slacks: tuple = ()

    @property
    def violations(self) -> int:
        return sum(r > self.bound + s for r, s in zip(self.ratios, self.slacks))


def lipschitz_bound(sigma: float = 1.0) -> float:
    return math.sqrt(2.0 / math.pi) / sigma


def _eval(h, points) -> np.ndarray:
    vals = np.asarray(h(points), dtype=np.float64).reshape(-1)
    if vals.shape[0] != points.shape[0]:
        raise InvalidInput("function handle must return one value per input point")
    if not np.all((vals >= 0.0) & (vals <= 1.0)):
        raise InvalidInput("function values must lie in [0, 1] for the smoothing bound to hold")
    return vals


def _noise(d: int, sigma: float, mc_samples: int, seed: SeedLike) -> np.ndarray:
    if not sigma > 0:
        raise InvalidInput("sigma must be positive")
    if mc_samples < 1:
        raise InvalidInput("mc_samples must be at least 1")
    return sigma * stream(seed).standard_normal((mc_samples, d))


def smoothed_value(h, x, sigma: float, mc_samples: int, seed: SeedLike) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    vals = _eval(h, x + _noise(x.size, sigma, mc_samples, seed))
    return math.fsum(vals) / mc_samples


def stein_gradient(h, x, sigma: float, mc_samples: int, seed: SeedLike):
    """Gradient estimate ``E[delta h(x + delta)] / sigma^2`` and its standard error."""
    x = np.asarray(x, dtype=np.float64).ravel()
    noise = _noise(x.size, sigma, mc_samples, seed)
    terms = noise * _eval(h, x + noise)[:, None] / sigma ** 2
    return terms.mean(axis=0), terms.std(axis=0, ddof=1) / math.sqrt(mc_samples)


def smoothed_difference(h, x, x_prime, sigma: float, mc_samples: int, seed: SeedLike):
    """``H(x) - H(x')`` with common random numbers, and its standard error."""
    x = np.asarray(x, dtype=np.float64).ravel()
    x_prime = np.asarray(x_prime, dtype=np.float64).ravel()
    noise = _noise(x.size, sigma, mc_samples, seed)
    diff = _eval(h, x + noise) - _eval(h, x_prime + noise)
    se = float(diff.std(ddof=1)) / math.sqrt(mc_samples) if mc_samples > 1 else math.inf
    return math.fsum(diff) / mc_samples, se


def lipschitz_mc_check(h, sigma: float, probe_pairs, mc_samples: int, seed: SeedLike,
                       max_relative_slack: float = 0.1) -> LipschitzCheckReport:
    """Largest observed ``|H(x) - H(x')| / ||x - x'||`` over ``probe_pairs``.

    Each pair ``i`` uses its own noise stream ``(seed, i)`` shared by both
    points. A pair's slack is three paired-difference standard errors
    divided by the pair distance; the report's ``slack`` belongs to the
    pair with the largest ratio.
    """
    bound = lipschitz_bound(sigma)
    ratios, slacks = [], []
    for i, (x, x_prime) in enumerate(probe_pairs):
        x = np.asarray(x, dtype=np.float64).ravel()
        x_prime = np.asarray(x_prime, dtype=np.float64).ravel()
        dist = float(np.linalg.norm(x - x_prime))
        if dist == 0.0:
            raise InvalidInput(f"probe pair {i} has coincident points")
        diff, se = smoothed_difference(h, x, x_prime, sigma, mc_samples, seed_sequence(seed, i))
        slack = 3.0 * se / dist
        if slack > max_relative_slack * bound:
            raise InvalidInput(f"probe pair {i}: slack {slack:.3g} exceeds {max_relative_slack:.0%} of the bound; "
                               "increase mc_samples or widen the pair")
        ratios.append(abs(diff) / dist)
        slacks.append(slack)
    if not ratios:
        raise InvalidInput("no probe pairs given")
    worst = int(np.argmax(ratios))
    return LipschitzCheckReport(float(ratios[worst]), bound, len(ratios), mc_samples, float(slacks[worst]),
                                tuple(ratios), tuple(slacks))
