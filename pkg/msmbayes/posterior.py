# msmbayes/posterior.py
"""
Priors, the unnormalized log-posterior, and the container for MCMC draws.
"""
import math
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from msmbayes.cohort import CohortDataset
from msmbayes.errors import ModelFamilyMismatch, ValidationFailure
from msmbayes.likelihood import per_transition_log_likelihood
from msmbayes.schemas import (
    PARAMETER_NAMES,
    ChainConfig,
    GammaPrior,
    ModelFamily,
    NormalPrior,
    ParameterSet,
    PriorSpec,
    TransitionLabel,
    TransitionParams,
    TransitionPrior,
    parameter_label,
    parameter_labels,
)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


# ============================================================================
# PRIOR DENSITIES
# ============================================================================

def normal_logpdf(x: float, prior: NormalPrior) -> float:
    z = (x - prior.mean) / prior.sd
    return -math.log(prior.sd) - _HALF_LOG_2PI - 0.5 * z * z


def gamma_logpdf(x: float, prior: GammaPrior) -> float:
    if not x > 0:
        raise ValidationFailure(f"Gamma prior evaluated at nonpositive value {x}")
    a, b = prior.shape, prior.rate
    return a * math.log(b) - float(gammaln(a)) + (a - 1.0) * math.log(x) - b * x


def transition_log_prior(tp: TransitionParams, prior: TransitionPrior) -> float:
    """Sum of the log densities of one transition's free parameters."""
    terms = []
    for name in PARAMETER_NAMES:
        spec = prior.for_name(name)
        if spec.fixed is not None:
            continue
        value = tp.value(name)
        terms.append(gamma_logpdf(value, spec) if isinstance(spec, GammaPrior) else normal_logpdf(value, spec))
    return math.fsum(terms)


def _check_prior(params: ParameterSet, prior: PriorSpec) -> None:
    if not prior.covers(params.family):
        missing = set(params.family.transitions) - set(prior.transitions)
        raise ModelFamilyMismatch(f"Prior has no block for {sorted(t.value for t in missing)}")


def log_prior(params: ParameterSet, prior: PriorSpec) -> float:
    """
    Independent priors: normal on coefficients, gamma on shapes and scales.
    Fixed parameters contribute 0.
    """
    _check_prior(params, prior)
    return math.fsum(
        transition_log_prior(params[label], prior.transitions[label]) for label in params.family.transitions
    )


def per_transition_log_posterior(
    family: ModelFamily,
    params: ParameterSet,
    data: CohortDataset,
    prior: PriorSpec,
) -> Dict[TransitionLabel, float]:
    """Likelihood component plus log-prior of each transition block."""
    _check_prior(params, prior)
    components = per_transition_log_likelihood(family, params, data)
    return {
        label: math.fsum([value, transition_log_prior(params[label], prior.transitions[label])])
        for label, value in components.items()
    }


def log_posterior(family: ModelFamily, params: ParameterSet, data: CohortDataset, prior: PriorSpec) -> float:
    """Unnormalized log-posterior: log-likelihood plus log-prior."""
    return math.fsum(per_transition_log_posterior(family, params, data, prior).values())


# ============================================================================
# POSTERIOR DRAWS
# ============================================================================

class PosteriorDraws:
    """
    Retained MCMC draws on the natural parameter scale.

    Attributes:
        family: model family the draws belong to
        labels: parameter labels (``FR.alpha``...) in canonical order
        values: array (chains, draws, parameters)
        age_center: centering constant of the fitted dataset
        chain_config / prior: settings used to produce the draws (None when
            the draws were read back from a file or built from a point)
        acceptance: array (chains, transitions), post-burn-in acceptance rate
            of each transition block (NaN for fully fixed blocks)
        rng: description of the random number generator
        provenance: prior, seed and chain entries copied from the header of
            a draws file, kept so derived reports can repeat them
    """

    def __init__(
        self,
        family: ModelFamily,
        labels: List[str],
        values: np.ndarray,
        age_center: float,
        chain_config: Optional[ChainConfig] = None,
        prior: Optional[PriorSpec] = None,
        acceptance: Optional[np.ndarray] = None,
        rng: str = "",
        provenance: Optional[Mapping[str, str]] = None,
    ):
        family = ModelFamily(family)
        values = np.asarray(values, dtype=float)
        if list(labels) != parameter_labels(family):
            raise ModelFamilyMismatch(f"Labels {labels} do not match family '{family.value}'")
        if values.ndim != 3 or values.shape[2] != len(labels):
            raise ValidationFailure(f"Draws must be (chains, draws, {len(labels)}), got {values.shape}")
        if values.shape[0] == 0 or values.shape[1] == 0:
            raise ValidationFailure("Posterior draws are empty")
        positive = [i for i, label in enumerate(labels) if label.endswith((".alpha", ".lambda"))]
        if np.any(~(values[:, :, positive] > 0)):
            raise ValidationFailure("Shape and scale draws must be strictly positive")

        self.family = family
        self.labels = list(labels)
        self.values = values
        self.age_center = float(age_center)
        self.chain_config = chain_config
        self.prior = prior
        self.acceptance = acceptance
        self.rng = rng
        self.provenance = dict(provenance or {})

    @classmethod
    def from_point(cls, params: ParameterSet, age_center: float) -> "PosteriorDraws":
        """Degenerate draws holding a single parameter value (plugin evaluation)."""
        values = np.array(list(params.values().values()), dtype=float).reshape(1, 1, -1)
        return cls(params.family, parameter_labels(params.family), values, age_center, rng="none")

    @property
    def n_chains(self) -> int:
        return self.values.shape[0]

    @property
    def n_draws(self) -> int:
        return self.values.shape[1]

    @property
    def n_total(self) -> int:
        return self.n_chains * self.n_draws

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def chains(self, label: str) -> np.ndarray:
        """(chains, draws) matrix of one parameter."""
        return self.values[:, :, self.index(label)]

    def flat(self, label: str) -> np.ndarray:
        """All draws of one parameter, chain after chain."""
        return self.chains(label).reshape(-1)

    def transition_arrays(self, transition: TransitionLabel) -> Tuple[np.ndarray, ...]:
        """Flattened (alpha, lambda, beta_sex, beta_age) draw arrays of one transition."""
        transition = TransitionLabel(transition)
        if transition not in self.family.transitions:
            raise ModelFamilyMismatch(f"No {transition.value} transition in '{self.family.value}' draws")
        return tuple(self.flat(parameter_label(transition, name)) for name in PARAMETER_NAMES)

    def subsample(self, max_draws: Optional[int]) -> "PosteriorDraws":
        """Evenly spaced subset of at most ``max_draws`` draws, as a single chain."""
        if max_draws is None or self.n_total <= max_draws:
            return self
        flat = self.values.reshape(-1, len(self.labels))
        keep = np.linspace(0, self.n_total - 1, max_draws).round().astype(int)
        return PosteriorDraws(self.family, self.labels, flat[keep][np.newaxis], self.age_center,
                              self.chain_config, self.prior, None, self.rng, self.provenance)

    def parameter_set(self, i: int) -> ParameterSet:
        """Flat draw ``i`` as a ParameterSet."""
        row = self.values.reshape(-1, len(self.labels))[i]
        return self._to_params(dict(zip(self.labels, row.tolist())))

    def __iter__(self) -> Iterator[ParameterSet]:
        for i in range(self.n_total):
            yield self.parameter_set(i)

    def posterior_means(self) -> ParameterSet:
        means = self.values.reshape(-1, len(self.labels)).mean(axis=0)
        return self._to_params(dict(zip(self.labels, means.tolist())))

    def _to_params(self, values: Dict[str, float]) -> ParameterSet:
        return ParameterSet.from_transitions(self.family, [
            TransitionParams.of(label, *(values[parameter_label(label, name)] for name in PARAMETER_NAMES))
            for label in self.family.transitions
        ])
