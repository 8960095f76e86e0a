# msmbayes/sampler.py
"""
Blockwise adaptive random-walk Metropolis.

The log-posterior factorizes into one term per transition, so every
transition block is sampled as its own Markov chain on the unconstrained
vector (log alpha, log lambda, beta_sex, beta_age), restricted to the free
parameters of the block.

Adaptation (burn-in only, frozen afterwards):
- proposal covariance: 2.38**2 / d times the empirical covariance of the
  second half of the burn-in history so far, refreshed every
  ``adaptation_interval`` iterations from ``adaptation_start`` on
- global log-scale: Robbins-Monro steps (it + 1)**-0.6 toward the target
  acceptance rate

Every (chain, block) pair draws from its own Philox substream
``SeedSequence(seed, spawn_key=(chain, block))``, so results do not depend on
execution order or on the number of worker threads.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from msmbayes.cohort import CohortDataset
from msmbayes.errors import ConfigError, DivergentTargetError, ModelFamilyMismatch
from msmbayes.likelihood import TransitionData
from msmbayes.logger import LoggerMixin
from msmbayes.posterior import PosteriorDraws, gamma_logpdf, normal_logpdf
from msmbayes.schemas import (
    PARAMETER_NAMES,
    ChainConfig,
    GammaPrior,
    ModelFamily,
    PriorSpec,
    TransitionLabel,
    TransitionPrior,
    parameter_labels,
)

RNG_DESCRIPTION = "numpy.random.Philox; SeedSequence(seed, spawn_key=(chain, block)); block FR=0 FD=1 RD=2"

_OPTIMAL_SCALE = 2.38 ** 2
_COVARIANCE_RIDGE = 1e-10
_ROBBINS_MONRO_DECAY = 0.6
_MAX_INITIAL_TRIES = 100
_LOG_POSITIVE = ("alpha", "lambda")


def block_rng(seed: int, chain: int, block: int) -> np.random.Generator:
    """Philox generator of one (chain, transition block) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chain, block))))


# ============================================================================
# GENERIC ADAPTIVE CHAIN
# ============================================================================

class ChainResult(NamedTuple):
    draws: np.ndarray       # (retained, d) on the sampling scale
    acceptance: float       # post-burn-in acceptance rate
    proposal_scale: float   # frozen Robbins-Monro multiplier


def adaptive_metropolis_chain(
    log_target: Callable[[np.ndarray], float],
    x0: np.ndarray,
    config: ChainConfig,
    rng: np.random.Generator,
) -> ChainResult:
    """
    Run one adaptive random-walk Metropolis chain on an unconstrained target.

    ``log_target`` may return -inf (or nan) outside its support; such
    proposals are rejected.

    Raises:
        DivergentTargetError: if the start is not finite, or if
            ``config.max_divergent`` consecutive proposals are not finite
    """
    current = np.array(x0, dtype=float).reshape(-1)
    d = current.size
    current_lp = log_target(current)
    if not math.isfinite(current_lp):
        raise DivergentTargetError("Log-posterior is not finite at the initial point")

    chol = config.initial_step * np.eye(d)
    log_scale = 0.0
    history = np.empty((config.n_burnin, d))
    draws = np.empty((config.n_retained, d))
    kept = 0
    accepted = 0
    divergent = 0

    for it in range(config.n_iterations):
        proposal = current + math.exp(log_scale) * (chol @ rng.standard_normal(d))
        proposal_lp = log_target(proposal)

        if math.isfinite(proposal_lp):
            divergent = 0
            log_ratio = proposal_lp - current_lp
            accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
            accept = rng.random() < accept_prob
        else:
            divergent += 1
            if divergent >= config.max_divergent:
                raise DivergentTargetError(
                    f"{divergent} consecutive proposals with non-finite log-posterior at iteration {it}"
                )
            accept_prob = 0.0
            accept = False

        if accept:
            current, current_lp = proposal, proposal_lp

        if it < config.n_burnin:
            history[it] = current
            log_scale += (it + 1) ** -_ROBBINS_MONRO_DECAY * (accept_prob - config.target_acceptance)
            done = it + 1
            if done >= config.adaptation_start and (done - config.adaptation_start) % config.adaptation_interval == 0:
                chol = _adapted_cholesky(history[done // 2:done], chol)
        else:
            accepted += accept
            if (it - config.n_burnin) % config.thin == 0:
                draws[kept] = current
                kept += 1

    acceptance = accepted / (config.n_iterations - config.n_burnin)
    return ChainResult(draws=draws, acceptance=acceptance, proposal_scale=math.exp(log_scale))


def _adapted_cholesky(window: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """Cholesky factor of the scaled window covariance; the previous factor if degenerate."""
    d = window.shape[1]
    if window.shape[0] < 2:
        return previous
    cov = np.atleast_2d(np.cov(window, rowvar=False))
    cov = (_OPTIMAL_SCALE / d) * cov + _COVARIANCE_RIDGE * np.eye(d)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return previous


# ============================================================================
# TRANSITION BLOCK TARGET
# ============================================================================

class BlockTarget:
    """
    Log-posterior of one transition on the sampling scale, log-Jacobian included.

    Sampling coordinates are the free parameters in canonical order, with
    alpha and lambda on the log scale. Fixed parameters keep their value.
    """

    def __init__(self, view: TransitionData, prior: TransitionPrior):
        self.view = view
        self.prior = prior
        self.free: List[str] = [name for name in PARAMETER_NAMES if prior.for_name(name).fixed is None]
        self.fixed: Dict[str, float] = {
            name: prior.for_name(name).fixed for name in PARAMETER_NAMES if name not in self.free
        }

    @property
    def dimension(self) -> int:
        return len(self.free)

    def natural(self, z: np.ndarray) -> Dict[str, float]:
        """Map sampling coordinates to the four natural-scale parameter values."""
        values = dict(self.fixed)
        for name, value in zip(self.free, np.asarray(z, dtype=float).tolist()):
            values[name] = math.exp(value) if name in _LOG_POSITIVE else value
        return values

    def natural_draws(self, z: np.ndarray) -> np.ndarray:
        """(n, d) sampling-scale draws to (n, 4) natural-scale draws."""
        out = np.empty((z.shape[0], len(PARAMETER_NAMES)))
        for j, name in enumerate(PARAMETER_NAMES):
            if name in self.fixed:
                out[:, j] = self.fixed[name]
                continue
            column = z[:, self.free.index(name)]
            out[:, j] = np.exp(column) if name in _LOG_POSITIVE else column
        return out

    def initial_point(self) -> np.ndarray:
        """alpha = 1, lambda = events / exposure, betas = 0, on the sampling scale."""
        exposure = self.view.exposure
        lam = max(self.view.n_events, 0.5) / exposure if exposure > 0 else 1.0
        start = {"alpha": 0.0, "lambda": math.log(lam), "beta_sex": 0.0, "beta_age": 0.0}
        return np.array([start[name] for name in self.free], dtype=float)

    def __call__(self, z: np.ndarray) -> float:
        coords = dict(zip(self.free, np.asarray(z, dtype=float).tolist()))
        log_alpha = coords.get("alpha", math.log(self.fixed["alpha"]) if "alpha" in self.fixed else 0.0)
        log_lam = coords.get("lambda", math.log(self.fixed["lambda"]) if "lambda" in self.fixed else 0.0)
        if abs(log_alpha) > 30.0 or abs(log_lam) > 700.0:
            return -math.inf
        values = self.natural(z)
        beta = np.array([values["beta_sex"], values["beta_age"]])

        with np.errstate(over="ignore", invalid="ignore"):
            ll = self.view.log_likelihood_fast(values["alpha"], log_lam, beta)
        if not math.isfinite(ll):
            return -math.inf

        terms = [ll]
        for name in self.free:
            spec = self.prior.for_name(name)
            if isinstance(spec, GammaPrior):
                value = values[name]
                if not value > 0:
                    return -math.inf
                # density of the positive value plus log |d value / d log value|
                terms.append(gamma_logpdf(value, spec) + coords[name])
            else:
                terms.append(normal_logpdf(values[name], spec))
        return math.fsum(terms)


# ============================================================================
# SAMPLER
# ============================================================================

class BlockMetropolisSampler(LoggerMixin):
    """Runs every (chain, transition block) pair and assembles PosteriorDraws."""

    def __init__(self, family: ModelFamily, data: CohortDataset, prior: PriorSpec, config: ChainConfig):
        self.family = ModelFamily(family)
        self.data = data
        self.prior = prior
        self.config = config

        if not prior.covers(self.family):
            missing = set(self.family.transitions) - set(prior.transitions)
            raise ModelFamilyMismatch(f"Prior has no block for {sorted(t.value for t in missing)}")

        self.targets: Dict[TransitionLabel, BlockTarget] = {
            label: BlockTarget(TransitionData.from_dataset(data, label), prior.transitions[label])
            for label in self.family.transitions
        }
        if all(target.dimension == 0 for target in self.targets.values()):
            raise ConfigError("Every parameter is fixed; there is nothing to sample")

    def _start(self, target: BlockTarget, rng: np.random.Generator, chain: int, label: TransitionLabel) -> np.ndarray:
        base = target.initial_point()
        for _ in range(_MAX_INITIAL_TRIES):
            x0 = base + self.config.jitter_sd * rng.standard_normal(target.dimension)
            if math.isfinite(target(x0)):
                return x0
        raise DivergentTargetError(
            f"{label.value} chain {chain}: log-posterior not finite at {_MAX_INITIAL_TRIES} jittered starts"
        )

    def run_block(self, chain: int, label: TransitionLabel) -> Tuple[np.ndarray, float]:
        """Natural-scale (retained, 4) draws and acceptance rate of one block."""
        target = self.targets[label]
        if target.dimension == 0:
            constant = target.natural_draws(np.empty((self.config.n_retained, 0)))
            return constant, math.nan

        rng = block_rng(self.config.seed, chain, label.block_index)
        x0 = self._start(target, rng, chain, label)
        result = adaptive_metropolis_chain(target, x0, self.config, rng)
        self.logger.debug(
            "block_completed",
            chain=chain,
            transition=label.value,
            acceptance=round(result.acceptance, 4),
            proposal_scale=round(result.proposal_scale, 4),
        )
        return target.natural_draws(result.draws), result.acceptance

    def run(self) -> PosteriorDraws:
        labels = parameter_labels(self.family)
        transitions = self.family.transitions
        jobs = [(chain, label) for chain in range(self.config.n_chains) for label in transitions]

        self.logger.info(
            "sampling_started",
            family=self.family.value,
            subjects=len(self.data),
            chains=self.config.n_chains,
            iterations=self.config.n_iterations,
            burnin=self.config.n_burnin,
            thin=self.config.thin,
            seed=self.config.seed,
            workers=self.config.workers,
        )

        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(lambda job: self.run_block(*job), jobs))
        else:
            results = [self.run_block(*job) for job in jobs]

        values = np.empty((self.config.n_chains, self.config.n_retained, len(labels)))
        acceptance = np.empty((self.config.n_chains, len(transitions)))
        width = len(PARAMETER_NAMES)
        for (chain, label), (block_draws, rate) in zip(jobs, results):
            j = transitions.index(label)
            values[chain, :, j * width:(j + 1) * width] = block_draws
            acceptance[chain, j] = rate

        for j, label in enumerate(transitions):
            self.logger.info(
                "chain_completed",
                transition=label.value,
                acceptance=[None if math.isnan(a) else round(float(a), 4) for a in acceptance[:, j]],
            )

        return PosteriorDraws(
            family=self.family,
            labels=labels,
            values=values,
            age_center=self.data.age_center,
            chain_config=self.config,
            prior=self.prior,
            acceptance=acceptance,
            rng=RNG_DESCRIPTION,
        )


def sample_posterior(
    family: ModelFamily,
    data: CohortDataset,
    prior: Optional[PriorSpec],
    config: ChainConfig,
) -> PosteriorDraws:
    """
    Draw from the posterior of ``family`` given ``data``.

    Bit-identical for identical (data, prior, config), whatever ``config.workers``.

    Raises:
        ConfigError: if every parameter is fixed
        DivergentTargetError: if the log-posterior stays non-finite
    """
    family = ModelFamily(family)
    prior = prior if prior is not None else PriorSpec.default(family)
    return BlockMetropolisSampler(family, data, prior, config).run()
