"""Empirical check of the sample-size guarantee."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInput
from ..score import SQRT_HALF_PI, sample_complexity, sample_scores

MIN_TRIALS = 50
REFERENCE_FACTOR = 64


@dataclass(frozen=True)
class ConcentrationReport:
    epsilon: float
    delta: float
    n: int
    trials: int
    reference_mean: float
    outage_rate: float
    max_deviation: float

    @property
    def allowance(self) -> float:
        """``delta`` plus three binomial standard deviations."""
        return self.delta + 3.0 * math.sqrt(self.delta * (1.0 - self.delta) / self.trials)


def concentration_trial(gen, model, transform, epsilon: float, delta: float, trials: int, seed: int,
                        jobs: int = 1) -> ConcentrationReport:
    """Fraction of planned-size runs whose normalised mean misses the reference by more than epsilon.

    Scores are normalised by ``sqrt(pi/2)`` so they lie in [0, 1]. The
    reference mean comes from one run at 64 times the planned size with
    seed ``(seed, 0)``; trial ``t`` uses seed ``(seed, 1, t)``.
    """
    if trials < MIN_TRIALS:
        raise InvalidInput(f"need at least {MIN_TRIALS} trials, got {trials}")
    plan = sample_complexity(epsilon, delta)
    ref_scores = sample_scores(gen, model, transform, REFERENCE_FACTOR * plan.n, [seed, 0], jobs=jobs)
    reference = math.fsum(ref_scores / SQRT_HALF_PI) / ref_scores.size
    deviations = np.empty(trials)
    for t in range(trials):
        scores = sample_scores(gen, model, transform, plan.n, [seed, 1, t], jobs=jobs)
        deviations[t] = abs(math.fsum(scores / SQRT_HALF_PI) / plan.n - reference)
    outage = float(np.count_nonzero(deviations > epsilon)) / trials
    return ConcentrationReport(float(epsilon), float(delta), plan.n, trials, reference, outage,
                               float(deviations.max()))
