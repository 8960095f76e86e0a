# tests/test_hazards.py
"""
Closed-form Weibull PH hazards.
"""
import math

import numpy as np
import pytest

from msmbayes.hazards import (
    all_causes_survival,
    cumulative_hazard,
    hazard_at,
    linear_predictor,
    transition_rate,
    weibull_inverse_cumhaz,
)
from msmbayes.schemas import CovariateVector, TransitionLabel, TransitionParams

FR = TransitionLabel.FR
FD = TransitionLabel.FD


@pytest.fixture
def woman_90():
    return CovariateVector(woman_indicator=1, age_centered=6.6)


# ============================================================================
# CUMULATIVE HAZARD AND HAZARD
# ============================================================================

def test_cumulative_hazard_zero_at_origin(woman_90):
    """H(0) = 0 for shapes on both sides of 1."""
    for alpha in (0.5, 1.0, 2.5):
        tp = TransitionParams.of(FR, alpha, 0.3, 0.2, 0.05)
        assert cumulative_hazard(tp, woman_90, 0.0) == 0.0


def test_cumulative_hazard_closed_form(woman_90):
    """lambda * t**alpha * exp(beta' x)."""
    tp = TransitionParams.of(FD, 0.7759, 0.3311, -0.5092, 0.0705)
    expected = 0.3311 * 2.0 ** 0.7759 * math.exp(-0.5092 + 0.0705 * 6.6)
    assert cumulative_hazard(tp, woman_90, 2.0) == pytest.approx(expected, rel=1e-13)


def test_hazard_is_derivative_of_cumulative_hazard(woman_90):
    """Central difference of H matches h."""
    tp = TransitionParams.of(FR, 0.6234, 0.5769, -0.6127, 0.0498)
    t, eps = 1.7, 1e-6
    slope = (cumulative_hazard(tp, woman_90, t + eps) - cumulative_hazard(tp, woman_90, t - eps)) / (2 * eps)
    assert hazard_at(tp, woman_90, t) == pytest.approx(slope, rel=1e-7)


def test_hazard_rejects_time_zero(woman_90):
    tp = TransitionParams.of(FR, 0.9, 0.03)
    with pytest.raises(ValueError):
        hazard_at(tp, woman_90, 0.0)


def test_cumulative_hazard_rejects_negative_time(woman_90):
    tp = TransitionParams.of(FR, 0.9, 0.03)
    with pytest.raises(ValueError):
        cumulative_hazard(tp, woman_90, -0.1)


def test_array_times_return_arrays(woman_90):
    tp = TransitionParams.of(FR, 0.9, 0.03)
    values = cumulative_hazard(tp, woman_90, np.array([0.0, 1.0, 2.0]))
    assert isinstance(values, np.ndarray)
    assert values.shape == (3,)
    assert np.all(np.diff(values) > 0)


# ============================================================================
# COVARIATES AND SURVIVAL
# ============================================================================

def test_linear_predictor_and_rate():
    tp = TransitionParams.of(FD, 1.0, 0.2, beta_sex=-0.5, beta_age=0.1)
    cov = CovariateVector.for_profile(1, 80.0, 83.4)
    assert linear_predictor(tp.coeffs, cov) == pytest.approx(-0.5 + 0.1 * (80.0 - 83.4))
    assert transition_rate(tp, cov) == pytest.approx(0.2 * math.exp(-0.5 - 0.34))


def test_all_causes_survival_is_product(woman_90):
    fr = TransitionParams.of(FR, 0.9198, 0.0279, 0.0262, 0.0244)
    fd = TransitionParams.of(FD, 0.7759, 0.3311, -0.5092, 0.0705)
    t = 3.0
    expected = math.exp(-cumulative_hazard(fr, woman_90, t)) * math.exp(-cumulative_hazard(fd, woman_90, t))
    assert all_causes_survival([fr, fd], woman_90, t) == pytest.approx(expected, rel=1e-13)
    assert all_causes_survival([fr, fd], woman_90, 0.0) == 1.0


def test_all_causes_survival_needs_transitions(woman_90):
    with pytest.raises(ValueError):
        all_causes_survival([], woman_90, 1.0)


def test_inverse_cumulative_hazard():
    """H(H^-1(e)) = e."""
    alpha, rate = 0.62, 0.41
    e = np.array([0.01, 0.5, 3.0])
    t = weibull_inverse_cumhaz(alpha, rate, e)
    np.testing.assert_allclose(rate * t ** alpha, e, rtol=1e-12)


# ============================================================================
# WORKED EXAMPLES
# ============================================================================

@pytest.fixture
def woman_70():
    return CovariateVector(woman_indicator=1, age_centered=-13.4)


def test_linear_predictor_examples(cr_params, woman_70):
    assert linear_predictor(cr_params[FR].coeffs, woman_70) == pytest.approx(-0.30156, abs=1e-5)
    assert linear_predictor(cr_params[FD].coeffs, woman_70) == pytest.approx(-1.4535, abs=1e-5)
    zero = TransitionParams.of(FR, 1.0, 1.0)
    assert linear_predictor(zero.coeffs, woman_70) == 0.0


def test_unit_profile_examples():
    baseline = CovariateVector(woman_indicator=0, age_centered=0.0)
    quadratic = TransitionParams.of(FR, 2.0, 1.0)
    assert hazard_at(quadratic, baseline, 3.0) == pytest.approx(6.0, rel=1e-15)
    assert cumulative_hazard(quadratic, baseline, 3.0) == pytest.approx(9.0, rel=1e-15)
    exponential = TransitionParams.of(FR, 1.0, 1.0)
    assert hazard_at(exponential, baseline, 0.37) == pytest.approx(1.0, rel=1e-15)
    assert all_causes_survival([exponential], baseline, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-15)


def test_reference_death_hazard_women_70(cr_params, woman_70):
    assert hazard_at(cr_params[FD], woman_70, 1.0) == pytest.approx(0.06002, abs=5e-5)
    assert cumulative_hazard(cr_params[FD], woman_70, 1.0) == pytest.approx(0.07737, abs=1e-5)
    assert cumulative_hazard(cr_params[FR], woman_70, 1.0) == pytest.approx(0.02064, abs=1e-5)


def test_reference_survival_women_70(cr_params, woman_70):
    survival = all_causes_survival([cr_params[FR], cr_params[FD]], woman_70, 1.0)
    assert survival == pytest.approx(0.9067, abs=1e-4)


# ============================================================================
# RANDOMIZED PROPERTIES
# ============================================================================

CASES = 1000


def _random_params(rng, label=FR):
    return TransitionParams.of(label, float(rng.uniform(0.3, 3.0)), float(math.exp(rng.uniform(-5.0, 1.0))),
                               float(rng.normal(0.0, 1.0)), float(rng.normal(0.0, 0.1)))


def _random_cov(rng):
    return CovariateVector(woman_indicator=int(rng.integers(0, 2)), age_centered=float(rng.uniform(-20.0, 20.0)))


def test_cumulative_hazard_is_nondecreasing():
    rng = np.random.default_rng(101)
    for _ in range(CASES):
        tp, cov = _random_params(rng), _random_cov(rng)
        t1, t2 = np.sort(rng.uniform(0.0, 10.0, 2))
        assert cumulative_hazard(tp, cov, 0.0) == 0.0
        assert 0.0 <= cumulative_hazard(tp, cov, float(t1)) <= cumulative_hazard(tp, cov, float(t2))


def test_hazard_matches_central_difference():
    rng = np.random.default_rng(102)
    for _ in range(CASES):
        tp, cov = _random_params(rng), _random_cov(rng)
        t = float(rng.uniform(0.05, 10.0))
        eps = 1e-5 * t
        slope = (cumulative_hazard(tp, cov, t + eps) - cumulative_hazard(tp, cov, t - eps)) / (2 * eps)
        assert slope == pytest.approx(hazard_at(tp, cov, t), rel=1e-4)


def test_hazard_ratio_is_constant_over_time():
    rng = np.random.default_rng(103)
    grid = np.linspace(0.1, 10.0, 25)
    for _ in range(CASES):
        tp, cov1, cov2 = _random_params(rng), _random_cov(rng), _random_cov(rng)
        ratios = np.array([hazard_at(tp, cov1, t) / hazard_at(tp, cov2, t) for t in grid])
        assert (ratios.max() - ratios.min()) / ratios.mean() < 1e-12


def test_unit_shape_reduces_to_exponential():
    rng = np.random.default_rng(104)
    for _ in range(CASES):
        tp, cov = _random_params(rng), _random_cov(rng)
        tp = TransitionParams.of(FR, 1.0, tp.baseline.scale, tp.coeffs.beta_sex, tp.coeffs.beta_age)
        t = float(rng.uniform(0.0, 10.0))
        expected = tp.baseline.scale * math.exp(linear_predictor(tp.coeffs, cov)) * t
        assert cumulative_hazard(tp, cov, t) == expected


def test_all_causes_survival_is_a_nonincreasing_probability():
    rng = np.random.default_rng(105)
    for _ in range(CASES):
        tps, cov = [_random_params(rng, FR), _random_params(rng, FD)], _random_cov(rng)
        t1, t2 = np.sort(rng.uniform(0.0, 10.0, 2))
        s1, s2 = all_causes_survival(tps, cov, float(t1)), all_causes_survival(tps, cov, float(t2))
        assert 0.0 <= s2 <= s1 <= 1.0
