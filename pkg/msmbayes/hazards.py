# msmbayes/hazards.py
"""
Closed-form Weibull proportional-hazards mathematics.

The public functions take validated parameter models and accept scalar or
array times. The ``weibull_*`` kernels work on plain arrays of shapes and
rates (rate = lambda * exp(linear predictor)) and broadcast, so likelihood,
quadrature and simulation code can evaluate many parameter draws at once.
"""
import math
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike

from msmbayes.schemas import CovariateVector, RegressionCoefficients, TransitionParams

Real = Union[float, np.ndarray]


def _as_output(value: np.ndarray) -> Real:
    return float(value) if np.ndim(value) == 0 else value


# ============================================================================
# ARRAY KERNELS
# ============================================================================

def weibull_cumhaz(alpha: ArrayLike, rate: ArrayLike, t: ArrayLike) -> np.ndarray:
    """H(t) = rate * t**alpha, with H(0) = 0 for every alpha > 0."""
    return np.asarray(rate) * np.power(np.asarray(t, dtype=float), np.asarray(alpha, dtype=float))


def weibull_hazard(alpha: ArrayLike, rate: ArrayLike, t: ArrayLike) -> np.ndarray:
    """h(t) = alpha * rate * t**(alpha - 1); t must be > 0."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha * np.asarray(rate) * np.power(np.asarray(t, dtype=float), alpha - 1.0)


def weibull_log_hazard(alpha: ArrayLike, log_rate: ArrayLike, log_t: ArrayLike) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return np.log(alpha) + np.asarray(log_rate) + (alpha - 1.0) * np.asarray(log_t)


def weibull_inverse_cumhaz(alpha: ArrayLike, rate: ArrayLike, h: ArrayLike) -> np.ndarray:
    """Time at which the cumulative hazard reaches ``h``."""
    return np.power(np.asarray(h, dtype=float) / np.asarray(rate), 1.0 / np.asarray(alpha))


# ============================================================================
# PARAMETER-MODEL API
# ============================================================================

def linear_predictor(coeffs: RegressionCoefficients, cov: CovariateVector) -> float:
    """beta' x for the woman indicator and centered age."""
    return coeffs.beta_sex * cov.woman_indicator + coeffs.beta_age * cov.age_centered


def transition_rate(tp: TransitionParams, cov: CovariateVector) -> float:
    """lambda * exp(beta' x), the covariate-adjusted Weibull scale."""
    return tp.baseline.scale * math.exp(linear_predictor(tp.coeffs, cov))


def hazard_at(tp: TransitionParams, cov: CovariateVector, t: ArrayLike) -> Real:
    """
    Cause-specific hazard alpha * lambda * t**(alpha - 1) * exp(beta' x).

    Raises:
        ValueError: for t <= 0, where the hazard diverges when alpha < 1
    """
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("hazard_at requires t > 0")
    return _as_output(weibull_hazard(tp.baseline.shape, transition_rate(tp, cov), t))


def cumulative_hazard(tp: TransitionParams, cov: CovariateVector, t: ArrayLike) -> Real:
    """lambda * t**alpha * exp(beta' x); zero at t = 0."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t >= 0)):
        raise ValueError("cumulative_hazard requires t >= 0")
    return _as_output(weibull_cumhaz(tp.baseline.shape, transition_rate(tp, cov), t))


def all_causes_survival(tps: Sequence[TransitionParams], cov: CovariateVector, t: ArrayLike) -> Real:
    """Probability of no transition out of the origin state by t."""
    if not tps:
        raise ValueError("all_causes_survival needs at least one transition")
    total = sum(np.asarray(cumulative_hazard(tp, cov, t)) for tp in tps)
    return _as_output(np.exp(-total))
