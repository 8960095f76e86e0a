# tests/test_sampler.py
"""
Adaptive random-walk Metropolis and the blockwise posterior sampler.
"""
import math

import numpy as np
import pytest

from msmbayes.cohort import CohortDataset, validate_dataset
from msmbayes.diagnostics import diagnostics, mcse_mean, summarize_draws
from msmbayes.errors import ConfigError, DivergentTargetError
from msmbayes.posterior import log_posterior
from msmbayes.reference import REFERENCE_AGE_CENTER
from msmbayes.sampler import (
    BlockTarget,
    adaptive_metropolis_chain,
    block_rng,
    sample_posterior,
)
from msmbayes.likelihood import TransitionData
from msmbayes.simulator import simulate_cohort
from msmbayes.schemas import (
    ChainConfig,
    GammaPrior,
    ModelFamily,
    NormalPrior,
    PriorSpec,
    SimulationSpec,
    TransitionLabel,
    TransitionParams,
    TransitionPrior,
)

ID = ModelFamily.ILLNESS_DEATH
CR = ModelFamily.COMPETING_RISKS


# ============================================================================
# GENERIC CHAIN
# ============================================================================

def test_chain_recovers_standard_normal():
    config = ChainConfig(n_chains=1, n_iterations=40000, n_burnin=5000, seed=1)
    result = adaptive_metropolis_chain(lambda x: -0.5 * float(x @ x), np.zeros(2), config, block_rng(1, 0, 0))
    assert result.draws.shape == (35000, 2)
    assert np.abs(result.draws.mean(axis=0)).max() < 0.1
    np.testing.assert_allclose(result.draws.std(axis=0), 1.0, atol=0.1)
    assert 0.1 < result.acceptance < 0.5


@pytest.mark.slow
def test_frozen_kernel_leaves_standard_normal_invariant():
    """Four one-dimensional chains, 200 000 retained draws in all."""
    config = ChainConfig(n_chains=4, n_iterations=52_500, n_burnin=2_500, seed=21)
    draws = np.concatenate([
        adaptive_metropolis_chain(lambda x: -0.5 * float(x[0] ** 2), np.zeros(1), config,
                                  block_rng(config.seed, chain, 0)).draws[:, 0]
        for chain in range(config.n_chains)
    ])
    assert draws.size == 200_000
    assert abs(draws.mean()) < 0.02
    assert abs(draws.std() - 1.0) < 0.02


def test_chain_thinning_keeps_every_kth_draw():
    config = ChainConfig(n_chains=1, n_iterations=1000, n_burnin=500, thin=7, seed=1)
    result = adaptive_metropolis_chain(lambda x: -0.5 * float(x @ x), np.zeros(1), config, block_rng(1, 0, 0))
    assert result.draws.shape == (config.n_retained, 1)
    assert config.n_retained == len(range(500, 1000, 7))


def test_chain_rejects_non_finite_start():
    config = ChainConfig(n_chains=1, n_iterations=100, n_burnin=50)
    with pytest.raises(DivergentTargetError):
        adaptive_metropolis_chain(lambda x: -math.inf, np.zeros(1), config, block_rng(0, 0, 0))


def test_chain_gives_up_after_consecutive_divergences():
    config = ChainConfig(n_chains=1, n_iterations=5000, n_burnin=100, max_divergent=20)
    target = lambda x: 0.0 if np.allclose(x, 0.0) else math.nan
    with pytest.raises(DivergentTargetError):
        adaptive_metropolis_chain(target, np.zeros(1), config, block_rng(0, 0, 0))


# ============================================================================
# BLOCK TARGET
# ============================================================================

def test_block_target_matches_log_posterior_up_to_jacobian(id_params, id_cohort):
    """Free-block target = transition log-posterior + log alpha + log lambda."""
    prior = PriorSpec.default(ID)
    label = TransitionLabel.RD
    target = BlockTarget(TransitionData.from_dataset(id_cohort, label), prior.transitions[label])
    tp = id_params[label]
    z = np.array([math.log(tp.baseline.shape), math.log(tp.baseline.scale),
                  tp.coeffs.beta_sex, tp.coeffs.beta_age])

    moved = id_params.model_copy(update={"transitions": {
        **id_params.transitions, label: TransitionParams.of(label, 1.1, 0.4, -0.3, 0.02),
    }})
    z_moved = np.array([math.log(1.1), math.log(0.4), -0.3, 0.02])
    expected = (log_posterior(ID, moved, id_cohort, prior) - log_posterior(ID, id_params, id_cohort, prior)
                + (z_moved[0] + z_moved[1]) - (z[0] + z[1]))
    assert target(z_moved) - target(z) == pytest.approx(expected, rel=1e-8, abs=1e-6)


def test_block_target_outside_support_is_minus_infinity(id_cohort):
    target = BlockTarget(TransitionData.from_dataset(id_cohort, TransitionLabel.FR), TransitionPrior())
    assert target(np.array([40.0, 0.0, 0.0, 0.0])) == -math.inf


# ============================================================================
# POSTERIOR SAMPLING
# ============================================================================

def _exponential_cohort(n=400, rate=0.5, horizon=3.0, seed=4):
    """Constant-hazard deaths without refracture, censored at the horizon."""
    rng = np.random.default_rng(seed)
    t = rng.exponential(1 / rate, n)
    event = t < horizon
    return CohortDataset.from_arrays(
        ids=[f"e{i}" for i in range(n)], woman=np.zeros(n, dtype=int), age=np.full(n, 80.0),
        t_first=np.round(np.where(event, t, horizon), 6).clip(1e-6),
        first_code=np.where(event, 2, 0), t_second=np.full(n, np.nan),
        second_code=np.full(n, -1), age_center=80.0,
    ), event


@pytest.mark.slow
def test_conjugate_gamma_posterior_for_fixed_shape():
    """alpha = 1 and betas fixed: lambda | data ~ gamma(a + events, b + exposure)."""
    data, event = _exponential_cohort()
    block = TransitionPrior(
        alpha=GammaPrior(fixed=1.0), lam=GammaPrior(shape=2.0, rate=1.0),
        beta_sex=NormalPrior(fixed=0.0), beta_age=NormalPrior(fixed=0.0),
    )
    fixed_fr = TransitionPrior(
        alpha=GammaPrior(fixed=1.0), lam=GammaPrior(fixed=0.01),
        beta_sex=NormalPrior(fixed=0.0), beta_age=NormalPrior(fixed=0.0),
    )
    prior = PriorSpec(transitions={TransitionLabel.FR: fixed_fr, TransitionLabel.FD: block})
    config = ChainConfig(n_chains=4, n_iterations=27_000, n_burnin=2_000, seed=9)
    draws = sample_posterior(CR, data, prior, config)

    shape = 2.0 + int(event.sum())
    rate = 1.0 + float(data.t_first.sum())
    lam = draws.flat("FD.lambda")
    assert lam.size >= 50_000
    assert lam.mean() == pytest.approx(shape / rate, rel=0.02)
    assert lam.std() == pytest.approx(math.sqrt(shape) / rate, rel=0.02)
    assert np.all(draws.flat("FR.lambda") == 0.01)
    assert np.isnan(draws.acceptance[:, 0]).all()


@pytest.mark.slow
def test_empty_dataset_samples_the_prior():
    block = TransitionPrior(
        alpha=GammaPrior(shape=4.0, rate=4.0), lam=GammaPrior(shape=3.0, rate=2.0),
        beta_sex=NormalPrior(mean=0.5, sd=1.0), beta_age=NormalPrior(mean=-0.1, sd=0.2),
    )
    prior = PriorSpec(transitions={label: block for label in CR.transitions})
    data = validate_dataset([], age_center=REFERENCE_AGE_CENTER)
    config = ChainConfig(n_chains=4, n_iterations=22_000, n_burnin=2_000, seed=13)
    draws = sample_posterior(CR, data, prior, config)

    for label in CR.transitions:
        for name, spec in (("beta_sex", block.beta_sex), ("beta_age", block.beta_age)):
            chains = draws.chains(f"{label.value}.{name}")
            assert abs(chains.mean() - spec.mean) < 4 * mcse_mean(chains)
            assert chains.std() == pytest.approx(spec.sd, rel=0.05)
        lam = draws.flat(f"{label.value}.lambda")
        assert lam.mean() == pytest.approx(1.5, rel=0.05)


def test_same_seed_gives_identical_draws(id_cohort, short_chain):
    first = sample_posterior(ID, id_cohort, None, short_chain)
    second = sample_posterior(ID, id_cohort, None, short_chain)
    np.testing.assert_array_equal(first.values, second.values)
    np.testing.assert_array_equal(first.acceptance, second.acceptance)


def test_worker_count_does_not_change_draws(id_cohort, short_chain):
    serial = sample_posterior(ID, id_cohort, None, short_chain)
    threaded = sample_posterior(ID, id_cohort, None, short_chain.model_copy(update={"workers": 3}))
    np.testing.assert_array_equal(serial.values, threaded.values)


def test_shared_blocks_identical_across_families(id_cohort, short_chain):
    """Separable blocks with equal seeds give bit-identical FR and FD chains."""
    cr = sample_posterior(CR, id_cohort, None, short_chain)
    ill = sample_posterior(ID, id_cohort, None, short_chain)
    for label in cr.labels:
        np.testing.assert_array_equal(cr.chains(label), ill.chains(label))


def test_different_seed_changes_draws(id_cohort, short_chain):
    first = sample_posterior(ID, id_cohort, None, short_chain)
    second = sample_posterior(ID, id_cohort, None, short_chain.model_copy(update={"seed": 6}))
    assert not np.array_equal(first.values, second.values)


def test_everything_fixed_is_a_config_error(id_cohort, short_chain):
    block = TransitionPrior(
        alpha=GammaPrior(fixed=1.0), lam=GammaPrior(fixed=0.1),
        beta_sex=NormalPrior(fixed=0.0), beta_age=NormalPrior(fixed=0.0),
    )
    prior = PriorSpec(transitions={label: block for label in ID.transitions})
    with pytest.raises(ConfigError):
        sample_posterior(ID, id_cohort, prior, short_chain)


@pytest.mark.slow
def test_posterior_concentrates_near_truth(id_params, id_cohort):
    config = ChainConfig(n_chains=2, n_iterations=4000, n_burnin=2000, seed=3)
    draws = sample_posterior(ID, id_cohort, None, config)
    means = draws.posterior_means()
    for label in ID.transitions:
        assert means[label].baseline.shape == pytest.approx(id_params[label].baseline.shape, rel=0.35)
    assert np.all((draws.acceptance >= 0.15) & (draws.acceptance <= 0.40))


@pytest.mark.slow
def test_default_fit_recovers_simulation_truth(id_params):
    """20 000 subjects censored at 8 years, default chains: every truth within 4 posterior sd."""
    spec = SimulationSpec(
        family=ID, true_params=id_params, n_subjects=20_000, horizon=8.0,
        age_center=REFERENCE_AGE_CENTER, seed=2025,
    )
    draws = sample_posterior(ID, simulate_cohort(spec), None, ChainConfig(workers=4))

    summary = summarize_draws(draws)
    assert len(summary) == 12
    for label, truth in id_params.values().items():
        mean, sd = summary.loc[label, "mean"], summary.loc[label, "sd"]
        assert abs(mean - truth) <= 4 * sd, label

    report = diagnostics(draws)
    for item in report.parameters:
        assert item.rhat < 1.01, item.label
        assert item.ess > 400, item.label
    assert report.converged(max_rhat=1.01, min_ess=400)
    assert np.all((draws.acceptance >= 0.15) & (draws.acceptance <= 0.40))
