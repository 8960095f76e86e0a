# msmbayes/reference.py
"""
Published posterior means for the hip-fracture cohort, used as simulation
truth, CLI defaults and test oracles.
"""
from typing import Dict, Tuple

from msmbayes.schemas import ModelFamily, ParameterSet, TransitionLabel, TransitionParams

REFERENCE_AGE_CENTER = 83.4

# (alpha, lambda, beta_sex, beta_age) per transition and family
_POSTERIOR_MEANS: Dict[ModelFamily, Dict[TransitionLabel, Tuple[float, float, float, float]]] = {
    ModelFamily.COMPETING_RISKS: {
        TransitionLabel.FR: (0.9197, 0.0279, 0.0254, 0.0244),
        TransitionLabel.FD: (0.7759, 0.3310, -0.5088, 0.0705),
    },
    ModelFamily.ILLNESS_DEATH: {
        TransitionLabel.FR: (0.9198, 0.0279, 0.0262, 0.0244),
        TransitionLabel.FD: (0.7759, 0.3311, -0.5092, 0.0705),
        TransitionLabel.RD: (0.6234, 0.5769, -0.6127, 0.0498),
    },
}

# One-year incidence posterior means in percent, keyed by (transition, sex, age).
INCIDENCE_MEANS: Dict[ModelFamily, Dict[Tuple[str, str, int], float]] = {
    ModelFamily.COMPETING_RISKS: {
        ("FR", "W", 70): 1.96, ("FR", "W", 80): 2.39, ("FR", "W", 90): 2.80,
        ("FR", "M", 70): 1.86, ("FR", "M", 80): 2.21, ("FR", "M", 90): 2.46,
        ("FD", "W", 70): 7.36, ("FD", "W", 80): 14.30, ("FD", "W", 90): 26.73,
        ("FD", "M", 70): 11.94, ("FD", "M", 80): 22.63, ("FD", "M", 90): 40.34,
    },
    ModelFamily.ILLNESS_DEATH: {
        ("FR", "W", 70): 1.96, ("FR", "W", 80): 2.39, ("FR", "W", 90): 2.80,
        ("FR", "M", 70): 1.86, ("FR", "M", 80): 2.21, ("FR", "M", 90): 2.45,
        ("FD", "W", 70): 7.36, ("FD", "W", 80): 14.30, ("FD", "W", 90): 26.72,
        ("FD", "M", 70): 11.95, ("FD", "M", 80): 22.63, ("FD", "M", 90): 40.35,
        ("RD", "W", 70): 14.77, ("RD", "W", 80): 23.11, ("RD", "W", 90): 35.14,
        ("RD", "M", 70): 25.56, ("RD", "M", 80): 38.46, ("RD", "M", 90): 55.03,
    },
}


def reference_parameters(family: ModelFamily) -> ParameterSet:
    """Posterior means reported for ``family``."""
    family = ModelFamily(family)
    return ParameterSet.from_transitions(
        family,
        [TransitionParams.of(label, *values) for label, values in _POSTERIOR_MEANS[family].items()],
    )
