"""Desk-scale ground truth for the certified-robustness claims."""
from .concentration import ConcentrationReport, concentration_trial
from .models import AffineModel, GeneratorSpec, SamplePoint, generate_sample
from .oracles import (
    LIPSCHITZ_BOUND,
    MinPerturbationResult,
    attack_min_perturbation,
    certified_radius_from_lipschitz,
    exact_min_perturbation,
    exact_min_perturbation_batch,
    make_lipschitz_bounded,
    true_global_robustness_oracle,
)
from .smoothing import (
    LipschitzCheckReport,
    lipschitz_bound,
    lipschitz_mc_check,
    smoothed_difference,
    smoothed_value,
    stein_gradient,
)
