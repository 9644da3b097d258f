"""Certified, attack-independent global robustness scores."""
__version__ = "0.1.0"

from .errors import EndpointError, GreatScoreError, InvalidInput, InvariantViolation, ProtocolError, RunAborted
from .kernels import BACKEND
from .score import (
    GlobalEstimate,
    Guarantee,
    LabeledPrediction,
    PredictionVector,
    RadiusCurve,
    SamplePlan,
    cumulative_certified_ra,
    draw_samples,
    great_score_mean,
    local_great_score,
    local_scores,
    run_great_score,
    sample_complexity,
    score_stability_sweep,
)
from .transform import TransformConfig, apply_transform
