# msmbayes/outcomes.py
"""
Cumulative incidences and transition probabilities from closed-form hazards.

States: 1 after the first fracture, 2 refractured, 3 dead. Closed forms:

    p11(s, t)       = exp(-(H_FR(t) - H_FR(s)) - (H_FD(t) - H_FD(s)))
    p22(s, t | t12) = exp(-(H_RD(t - t12) - H_RD(s - t12)))    clock reset

Integrals (composite Gauss-Legendre, see ``msmbayes.quadrature``):

    CIF_j(t)          = int_0^t h_j(u) p11(0, u) du
    p12(s, t)  [CR]   = int_s^t p11(s, u) h_FR(u) du
    p12(s, t)  [ID]   = int_s^t p11(s, u) h_FR(u) p22(u, t | u) du

Illness-death p13 and p23 are complements. Every core routine works on arrays
of parameter draws, so posterior functionals cost one quadrature per grid
point rather than one per draw.
"""
import math
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from msmbayes.errors import ModelFamilyMismatch, ValidationFailure
from msmbayes.hazards import weibull_cumhaz, weibull_hazard
from msmbayes.logger import get_logger
from msmbayes.posterior import PosteriorDraws
from msmbayes.quadrature import grading_levels, integrate
from msmbayes.schemas import (
    CovariateVector,
    CurveEstimate,
    CurveFunctional,
    ModelFamily,
    OccupancyDecomposition,
    ParameterSet,
    Profile,
    QuadratureConfig,
    StartState,
    TimeGrid,
    TransitionLabel,
    TransitionParams,
)

logger = get_logger(__name__)

FR, FD, RD = TransitionLabel.FR, TransitionLabel.FD, TransitionLabel.RD

DEFAULT_CURVE_DRAWS = 1000
_DRAW_CHUNK = 256

TransitionInput = Union[ParameterSet, Mapping[TransitionLabel, TransitionParams], Sequence[TransitionParams]]


# ============================================================================
# DRAW-VECTORIZED HAZARDS
# ============================================================================

class WeibullArrays(NamedTuple):
    """Shapes and covariate-adjusted rates of one transition, one entry per draw."""
    alpha: np.ndarray
    rate: np.ndarray

    def cumhaz(self, u: np.ndarray) -> np.ndarray:
        """(draws, len(u)); u >= 0."""
        return weibull_cumhaz(self.alpha[:, np.newaxis], self.rate[:, np.newaxis], np.atleast_1d(u))

    def hazard(self, u: np.ndarray) -> np.ndarray:
        """(draws, len(u)); u > 0."""
        return weibull_hazard(self.alpha[:, np.newaxis], self.rate[:, np.newaxis], np.atleast_1d(u))

    def cumhaz_at(self, u: float) -> np.ndarray:
        return self.cumhaz(np.array([u], dtype=float))[:, 0]

    def take(self, part: slice) -> "WeibullArrays":
        return WeibullArrays(self.alpha[part], self.rate[part])


Rates = Dict[TransitionLabel, WeibullArrays]


def _rates_from_params(tps: TransitionInput, cov: CovariateVector) -> Rates:
    if isinstance(tps, ParameterSet):
        items = tps.transitions.values()
    elif isinstance(tps, Mapping):
        items = tps.values()
    else:
        items = tps
    rates = {}
    for tp in items:
        lp = tp.coeffs.beta_sex * cov.woman_indicator + tp.coeffs.beta_age * cov.age_centered
        rates[tp.label] = WeibullArrays(
            alpha=np.array([tp.baseline.shape]),
            rate=np.array([tp.baseline.scale * math.exp(lp)]),
        )
    return rates


def _rates_from_draws(draws: PosteriorDraws, cov: CovariateVector) -> Rates:
    rates = {}
    for label in draws.family.transitions:
        alpha, lam, beta_sex, beta_age = draws.transition_arrays(label)
        rates[label] = WeibullArrays(
            alpha=alpha, rate=lam * np.exp(beta_sex * cov.woman_indicator + beta_age * cov.age_centered),
        )
    return rates


def _require(rates: Rates, labels: Iterable[TransitionLabel], what: str) -> None:
    missing = [label.value for label in labels if label not in rates]
    if missing:
        raise ModelFamilyMismatch(f"{what} needs transition(s) {missing}")


def _levels(r: WeibullArrays, width: float, q: QuadratureConfig) -> int:
    return grading_levels(float(np.min(r.alpha)), float(np.max(r.rate)), width, q)


# ============================================================================
# CORE ROUTINES (arrays of draws)
# ============================================================================

def _p11(rates: Rates, s: float, t: np.ndarray) -> np.ndarray:
    """(draws, len(t)) probability of staying in state 1 from s to t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    fr, fd = rates[FR], rates[FD]
    return np.exp(
        -(fr.cumhaz(t) - fr.cumhaz_at(s)[:, np.newaxis]) - (fd.cumhaz(t) - fd.cumhaz_at(s)[:, np.newaxis])
    )


def _p22(rd: WeibullArrays, s: float, t: np.ndarray, t12: float) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.exp(-(rd.cumhaz(t - t12) - rd.cumhaz_at(s - t12)[:, np.newaxis]))


def _exit_integral(rates: Rates, cause: TransitionLabel, grid: np.ndarray, s: float, q: QuadratureConfig) -> np.ndarray:
    """
    (draws, len(grid)) values of int_s^t p11(s, u) h_cause(u) du.

    Accumulated interval by interval along the grid, so each curve is
    nondecreasing by construction.
    """
    target = rates[cause]
    levels = _levels(target, max(float(grid[-1]) - s, 1e-12), q) if s == 0 else 0

    def integrand(u: np.ndarray) -> np.ndarray:
        return _p11(rates, s, u) * target.hazard(u)

    out = np.zeros((target.alpha.size, grid.size))
    total = np.zeros(target.alpha.size)
    previous = s
    for k, t in enumerate(grid.tolist()):
        if t > previous:
            total = total + integrate(integrand, previous, t, q, left_levels=levels if previous == s else 0)
            previous = t
        out[:, k] = total
    return out


def _p12_illness_death(rates: Rates, s: float, grid: np.ndarray, q: QuadratureConfig) -> np.ndarray:
    """(draws, len(grid)) probability of being alive in the refracture state at each t."""
    fr, rd = rates[FR], rates[RD]
    left = _levels(fr, max(float(grid[-1]) - s, 1e-12), q) if s == 0 else 0
    out = np.zeros((fr.alpha.size, grid.size))
    for k, t in enumerate(grid.tolist()):
        if t <= s:
            continue
        right = _levels(rd, t - s, q)

        def integrand(u: np.ndarray, t: float = t) -> np.ndarray:
            return _p11(rates, s, u) * fr.hazard(u) * np.exp(-rd.cumhaz(t - u))

        out[:, k] = integrate(integrand, s, t, q, left_levels=left, right_levels=right)
    return out


def _functional_values(
    rates: Rates,
    family: ModelFamily,
    functional: CurveFunctional,
    grid: np.ndarray,
    q: QuadratureConfig,
    t12: float = 0.0,
) -> np.ndarray:
    """(draws, len(grid)) values of a curve functional, clipped to [0, 1]."""
    if functional.needs_illness_death and family is not ModelFamily.ILLNESS_DEATH:
        raise ModelFamilyMismatch(f"{functional.value} needs illness-death draws, got '{family.value}'")

    if functional is CurveFunctional.CIF_FR:
        values = _exit_integral(rates, FR, grid, 0.0, q)
    elif functional is CurveFunctional.CIF_FD:
        values = _exit_integral(rates, FD, grid, 0.0, q)
    elif functional is CurveFunctional.P11:
        values = _p11(rates, 0.0, grid)
    elif functional is CurveFunctional.P12:
        values = (_p12_illness_death(rates, 0.0, grid, q) if family is ModelFamily.ILLNESS_DEATH
                  else _exit_integral(rates, FR, grid, 0.0, q))
    elif functional is CurveFunctional.P13:
        if family is ModelFamily.ILLNESS_DEATH:
            values = 1.0 - _p11(rates, 0.0, grid) - _p12_illness_death(rates, 0.0, grid, q)
        else:
            values = _exit_integral(rates, FD, grid, 0.0, q)
    elif functional is CurveFunctional.P22:
        values = _p22(rates[RD], t12, grid, t12)
    else:
        values = 1.0 - _p22(rates[RD], t12, grid, t12)
    return np.clip(values, 0.0, 1.0)


def _chunked(rates: Rates, n: int, compute) -> np.ndarray:
    """Apply ``compute`` to slices of at most _DRAW_CHUNK draws and stack the results."""
    parts = []
    for start in range(0, n, _DRAW_CHUNK):
        part = slice(start, min(start + _DRAW_CHUNK, n))
        parts.append(compute({label: r.take(part) for label, r in rates.items()}))
    return np.concatenate(parts, axis=0)


def _check_times(s: float, t: float) -> None:
    if not (math.isfinite(s) and math.isfinite(t)):
        raise ValidationFailure("times must be finite")
    if s < 0:
        raise ValidationFailure(f"s must be >= 0, got {s}")
    if s > t:
        raise ValidationFailure(f"s ({s}) must not exceed t ({t})")


# ============================================================================
# POINT EVALUATION
# ============================================================================

def cumulative_incidence(
    tps: TransitionInput,
    cov: CovariateVector,
    cause: TransitionLabel,
    t: float,
    q: Optional[QuadratureConfig] = None,
) -> float:
    """
    Probability of leaving state 1 through ``cause`` (FR or FD) by time t.

    Raises:
        QuadratureError: if quadrature does not converge
    """
    q = q or QuadratureConfig()
    cause = TransitionLabel(cause)
    if cause is RD:
        raise ValidationFailure("cumulative incidence is defined for FR and FD only")
    _check_times(0.0, t)
    rates = _rates_from_params(tps, cov)
    _require(rates, (FR, FD), "cumulative_incidence")
    if t == 0:
        return 0.0
    value = _exit_integral(rates, cause, np.array([t], dtype=float), 0.0, q)[0, 0]
    return float(min(max(value, 0.0), 1.0))


def transition_probabilities_cr(
    tps: TransitionInput,
    cov: CovariateVector,
    s: float,
    t: float,
    q: Optional[QuadratureConfig] = None,
) -> Dict[str, float]:
    """{p11, p12, p13} of the competing-risks model from s to t."""
    q = q or QuadratureConfig()
    _check_times(s, t)
    rates = _rates_from_params(tps, cov)
    _require(rates, (FR, FD), "transition_probabilities_cr")
    grid = np.array([t], dtype=float)
    return {
        "p11": float(_p11(rates, s, grid)[0, 0]),
        "p12": float(_exit_integral(rates, FR, grid, s, q)[0, 0]),
        "p13": float(_exit_integral(rates, FD, grid, s, q)[0, 0]),
    }


def transition_probabilities_id(
    tps: TransitionInput,
    cov: CovariateVector,
    s: float,
    t: float,
    t12: Optional[float] = None,
    start: StartState = StartState.HEALTHY,
    q: Optional[QuadratureConfig] = None,
) -> Dict[str, float]:
    """
    Illness-death transition probabilities from s to t.

    Starting healthy: {p11, p12, p13}. Starting refractured (entered at t12
    on the reset clock): {p22, p23}.

    Raises:
        ValidationFailure: s > t, or a refractured start without t12 <= s
    """
    q = q or QuadratureConfig()
    start = StartState(start)
    _check_times(s, t)
    rates = _rates_from_params(tps, cov)
    grid = np.array([t], dtype=float)

    if start is StartState.REFRACTURED:
        if t12 is None:
            raise ValidationFailure("a refractured start needs the refracture time t12")
        if not 0 <= t12 <= s:
            raise ValidationFailure(f"t12 ({t12}) must lie in [0, s] with s = {s}")
        _require(rates, (RD,), "transition_probabilities_id")
        p22 = float(_p22(rates[RD], s, grid, t12)[0, 0])
        return {"p22": p22, "p23": 1.0 - p22}

    _require(rates, (FR, FD, RD), "transition_probabilities_id")
    p11 = float(_p11(rates, s, grid)[0, 0])
    p12 = float(_p12_illness_death(rates, s, grid, q)[0, 0])
    return {"p11": p11, "p12": p12, "p13": 1.0 - p11 - p12}


# ============================================================================
# POSTERIOR FUNCTIONALS
# ============================================================================

def _band(values: np.ndarray, level: float):
    tail = (1.0 - level) / 2.0
    mean = values.mean(axis=0)
    lower, upper = np.quantile(values, [tail, 1.0 - tail], axis=0)
    # pointwise band widened to contain the mean when rounding puts it outside
    return mean, np.minimum(lower, mean), np.maximum(upper, mean)


def posterior_curve(
    draws: PosteriorDraws,
    functional: Union[CurveFunctional, str],
    cov: CovariateVector,
    grid: Optional[TimeGrid] = None,
    q: Optional[QuadratureConfig] = None,
    level: float = 0.95,
    t12: Optional[float] = None,
    max_draws: Optional[int] = DEFAULT_CURVE_DRAWS,
) -> CurveEstimate:
    """
    Pointwise posterior mean and equal-tailed band of a probability curve.

    ``p22``/``p23`` start in the refracture state at ``t12`` (default 0); the
    other functionals start in state 1 at time 0.

    Raises:
        ModelFamilyMismatch: e.g. p23 requested from competing-risks draws
    """
    functional = CurveFunctional(functional)
    grid = grid or TimeGrid.regular()
    q = q or QuadratureConfig()
    t12 = 0.0 if t12 is None else float(t12)
    if functional.needs_illness_death and grid.times[0] < t12:
        raise ValidationFailure(f"{functional.value} curve grid must start at or after t12 = {t12}")

    subset = draws.subsample(max_draws)
    times = np.asarray(grid.times, dtype=float)
    rates = _rates_from_draws(subset, cov)
    values = _chunked(
        rates, subset.n_total,
        lambda part: _functional_values(part, subset.family, functional, times, q, t12),
    )
    mean, lower, upper = _band(values, level)
    logger.debug("curve_evaluated", functional=functional.value, draws=subset.n_total, points=len(grid))
    return CurveEstimate(
        functional=functional,
        grid=grid,
        mean=tuple(mean.tolist()),
        lower=tuple(lower.tolist()),
        upper=tuple(upper.tolist()),
        level=level,
        n_draws=subset.n_total,
        t12=t12 if functional.needs_illness_death else None,
    )


def incidence_table(
    draws: PosteriorDraws,
    profiles: Sequence[Profile],
    horizon: float = 1.0,
    q: Optional[QuadratureConfig] = None,
    level: float = 0.95,
    max_draws: Optional[int] = None,
) -> pd.DataFrame:
    """
    Posterior mean and credible interval of the incidence by ``horizon``, in percent.

    One row per transition and profile: FR and FD cumulative incidences from
    either family, RD (death within ``horizon`` of a refracture) from
    illness-death draws only. Columns: transition, sex, age, mean, lower, upper.
    """
    if not profiles:
        raise ValidationFailure("incidence_table needs at least one profile")
    if not horizon > 0:
        raise ValidationFailure("horizon must be > 0")
    q = q or QuadratureConfig()
    subset = draws.subsample(max_draws)
    grid = np.array([horizon], dtype=float)
    functionals = [(FR, CurveFunctional.CIF_FR), (FD, CurveFunctional.CIF_FD)]
    if subset.family is ModelFamily.ILLNESS_DEATH:
        functionals.append((RD, CurveFunctional.P23))

    rows: List[dict] = []
    for label, functional in functionals:
        for profile in profiles:
            rates = _rates_from_draws(subset, profile.covariates(subset.age_center))
            values = _chunked(
                rates, subset.n_total,
                lambda part: _functional_values(part, subset.family, functional, grid, q),
            )
            mean, lower, upper = _band(values, level)
            rows.append({
                "transition": label.value,
                "sex": profile.sex,
                "age": profile.age,
                "mean": 100.0 * float(mean[0]),
                "lower": 100.0 * float(lower[0]),
                "upper": 100.0 * float(upper[0]),
            })
    logger.debug("incidence_table_evaluated", rows=len(rows), draws=subset.n_total)
    return pd.DataFrame(rows, columns=["transition", "sex", "age", "mean", "lower", "upper"])


def plugin_incidence_table(
    params: ParameterSet,
    profiles: Sequence[Profile],
    age_center: float,
    horizon: float = 1.0,
    q: Optional[QuadratureConfig] = None,
) -> pd.DataFrame:
    """Incidence table evaluated at a point estimate (lower = mean = upper)."""
    return incidence_table(PosteriorDraws.from_point(params, age_center), profiles, horizon, q)


def occupancy_decomposition(
    draws: PosteriorDraws,
    cov: CovariateVector,
    grid: Optional[TimeGrid] = None,
    q: Optional[QuadratureConfig] = None,
    max_draws: Optional[int] = DEFAULT_CURVE_DRAWS,
) -> OccupancyDecomposition:
    """
    Split the posterior mean refracture CIF into patients alive in the
    refracture state (p12(0, t)) and refractured patients who have died.

    Raises:
        ModelFamilyMismatch: for competing-risks draws
    """
    if draws.family is not ModelFamily.ILLNESS_DEATH:
        raise ModelFamilyMismatch("occupancy decomposition needs illness-death draws")
    grid = grid or TimeGrid.regular()
    q = q or QuadratureConfig()
    subset = draws.subsample(max_draws)
    times = np.asarray(grid.times, dtype=float)
    rates = _rates_from_draws(subset, cov)

    def both(part: Rates) -> np.ndarray:
        cif = np.clip(_exit_integral(part, FR, times, 0.0, q), 0.0, 1.0)
        occupancy = np.clip(_p12_illness_death(part, 0.0, times, q), 0.0, cif)
        return np.stack([cif, occupancy], axis=1)

    values = _chunked(rates, subset.n_total, both)
    cif = values[:, 0, :].mean(axis=0)
    occupancy = np.minimum(values[:, 1, :].mean(axis=0), cif)
    return OccupancyDecomposition(
        grid=grid,
        cif_refracture=tuple(cif.tolist()),
        occupancy_refracture=tuple(occupancy.tolist()),
        dead_after_refracture=tuple((cif - occupancy).tolist()),
    )
