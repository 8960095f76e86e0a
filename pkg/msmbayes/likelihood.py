# msmbayes/likelihood.py
"""
Exact right-censored log-likelihood for competing-risks and illness-death
Weibull PH models.

The likelihood factorizes into one product per transition. Each transition
sees a set of subjects at risk (exit time, covariates) and a subset of them
with an observed event:

    FR, FD: every subject, at risk until t_first; events are refractures
            (FR) or deaths without refracture (FD)
    RD:     refractured subjects, at risk for t_second on the reset clock;
            events are deaths after refracture

A transition's component is sum(events: log h(t)) - sum(at risk: H(t)).
"""
import math
from typing import Dict, NamedTuple

import numpy as np

from msmbayes.cohort import FIRST_CODES, SECOND_CODES, CohortDataset
from msmbayes.errors import ModelFamilyMismatch, ValidationFailure
from msmbayes.schemas import (
    FirstOutcome,
    ModelFamily,
    ParameterSet,
    SecondOutcome,
    TransitionLabel,
    TransitionParams,
)


class TransitionData(NamedTuple):
    """Subjects at risk for one transition, with sufficient statistics of its events."""
    label: TransitionLabel
    times: np.ndarray        # exit time of each subject at risk
    log_times: np.ndarray
    x: np.ndarray            # (n, 2): woman indicator, centered age
    event: np.ndarray        # bool per subject at risk
    n_events: int
    sum_log_t_events: float
    sum_x_events: np.ndarray  # (2,)

    @property
    def exposure(self) -> float:
        return math.fsum(self.times.tolist())

    @classmethod
    def from_dataset(cls, data: CohortDataset, label: TransitionLabel) -> "TransitionData":
        label = TransitionLabel(label)
        x = np.column_stack([data.woman.astype(float), data.age_centered])
        if label is TransitionLabel.RD:
            keep = data.refractured
            times = data.t_second[keep]
            x = x[keep]
            event = data.second_code[keep] == SECOND_CODES[SecondOutcome.DEATH]
        else:
            outcome = FirstOutcome.REFRACTURE if label is TransitionLabel.FR else FirstOutcome.DEATH
            times = data.t_first
            event = data.first_code == FIRST_CODES[outcome]

        times = np.asarray(times, dtype=float)
        if np.any(~(times > 0)):
            raise ValidationFailure(f"{label.value}: hazard evaluation needs event and exit times > 0")
        log_times = np.log(times)
        return cls(
            label=label,
            times=times,
            log_times=log_times,
            x=x.reshape(-1, 2),
            event=event,
            n_events=int(np.sum(event)),
            sum_log_t_events=float(np.sum(log_times[event])),
            sum_x_events=x.reshape(-1, 2)[event].sum(axis=0),
        )

    def log_likelihood_fast(self, alpha: float, log_lam: float, beta: np.ndarray) -> float:
        """
        Component value from sufficient statistics; used inside the sampler.

        Equal to ``transition_terms(...).sum()`` up to summation order.
        """
        log_rate = self.x @ beta
        event_part = (
            self.n_events * (math.log(alpha) + log_lam)
            + (alpha - 1.0) * self.sum_log_t_events
            + float(self.sum_x_events @ beta)
        )
        cumhaz = math.exp(log_lam) * np.sum(np.exp(alpha * self.log_times + log_rate))
        return event_part - float(cumhaz)


def transition_terms(tp: TransitionParams, view: TransitionData) -> np.ndarray:
    """Per-subject contributions event * log h(t) - H(t), computed in log space."""
    alpha = tp.baseline.shape
    # elementwise rather than a matrix product: each term is bit-identical whatever the row order
    log_rate = math.log(tp.baseline.scale) + (
        view.x[:, 0] * tp.coeffs.beta_sex + view.x[:, 1] * tp.coeffs.beta_age
    )
    log_cumhaz = log_rate + alpha * view.log_times
    log_hazard = math.log(alpha) + log_rate + (alpha - 1.0) * view.log_times
    return np.where(view.event, log_hazard, 0.0) - np.exp(log_cumhaz)


def _check_family(family: ModelFamily, params: ParameterSet) -> ModelFamily:
    family = ModelFamily(family)
    if params.family != family:
        raise ModelFamilyMismatch(
            f"Parameters are for family '{params.family.value}', likelihood requested for '{family.value}'"
        )
    return family


def per_transition_log_likelihood(
    family: ModelFamily,
    params: ParameterSet,
    data: CohortDataset,
) -> Dict[TransitionLabel, float]:
    """
    Additive decomposition of the log-likelihood, one entry per transition.

    Each component is an exactly rounded sum (math.fsum), so it does not
    depend on record order.
    """
    family = _check_family(family, params)
    return {
        label: math.fsum(transition_terms(params[label], TransitionData.from_dataset(data, label)).tolist())
        for label in family.transitions
    }


def log_likelihood(family: ModelFamily, params: ParameterSet, data: CohortDataset) -> float:
    """Total log-likelihood, the exactly rounded sum of the per-transition components."""
    return math.fsum(per_transition_log_likelihood(family, params, data).values())
