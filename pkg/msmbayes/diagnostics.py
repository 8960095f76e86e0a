# msmbayes/diagnostics.py
"""
Convergence diagnostics and posterior summaries.

Split R-hat halves every chain. The effective sample size pools
FFT autocovariances across chains and truncates the autocorrelation sum with
Geyer's initial positive and initial monotone sequences.
"""
import math
from typing import List, Optional

import numpy as np
import pandas as pd

from msmbayes.errors import ValidationFailure
from msmbayes.logger import get_logger
from msmbayes.posterior import PosteriorDraws
from msmbayes.schemas import DiagnosticsReport, ParameterDiagnostics, PARAMETER_NAMES, TransitionLabel

logger = get_logger(__name__)

SUMMARY_COLUMNS = ["mean", "sd", "q2.5", "q50", "q97.5"]
MIN_DRAWS = 4


# ============================================================================
# ESTIMATORS ON (chains, draws) ARRAYS
# ============================================================================

def split_chains(ary: np.ndarray) -> np.ndarray:
    """(m, n) -> (2m, n // 2): first and last halves of every chain."""
    ary = np.asarray(ary, dtype=float)
    half = ary.shape[1] // 2
    return np.vstack((ary[:, :half], ary[:, -half:]))


def split_rhat(ary: np.ndarray) -> float:
    """
    Potential scale reduction on split chains.

    Returns nan when any half-chain has zero variance.
    """
    halves = split_chains(ary)
    n = halves.shape[1]
    chain_var = np.var(halves, axis=1, ddof=1)
    if np.any(chain_var == 0):
        return math.nan
    within = float(np.mean(chain_var))
    between = n * float(np.var(np.mean(halves, axis=1), ddof=1))
    var_plus = (n - 1.0) / n * within + between / n
    return math.sqrt(var_plus / within)


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance at every lag, via a zero-padded FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    centered = x - x.mean()
    spectrum = np.fft.rfft(centered, n=size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), n=size)[:n]
    return acov / n


def effective_sample_size(ary: np.ndarray) -> float:
    """
    Multi-chain ESS with Geyer truncation, capped at the number of draws.

    Returns nan for constant draws and for chains shorter than 4 draws.
    """
    ary = np.asarray(ary, dtype=float)
    n_chain, n_draw = ary.shape
    if n_draw < MIN_DRAWS:
        return math.nan
    acov = np.asarray([autocovariance(chain) for chain in ary])
    chain_mean = ary.mean(axis=1)
    mean_var = float(np.mean(acov[:, 0])) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += float(np.var(chain_mean, ddof=1))
    if not var_plus > 0:
        return math.nan

    rho = np.zeros(n_draw)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    rho[1] = rho_odd

    # initial positive sequence
    t = 1
    while t < n_draw - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t

    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    tau = -1.0 + 2.0 * float(np.sum(rho[:max_t])) + float(np.sum(rho[max_t + 1:max_t + 2]))
    total = n_chain * n_draw
    if not math.isfinite(tau) or tau <= 0:
        return float(total)
    return min(total / tau, float(total))


def mcse_mean(ary: np.ndarray, ess: Optional[float] = None) -> float:
    """Posterior sd / sqrt(ESS)."""
    ary = np.asarray(ary, dtype=float)
    ess = effective_sample_size(ary) if ess is None else ess
    sd = float(np.std(ary, ddof=1))
    if sd == 0:
        return 0.0
    return sd / math.sqrt(ess) if ess and math.isfinite(ess) else math.nan


# ============================================================================
# DRAWS-LEVEL API
# ============================================================================

def _fixed_labels(draws: PosteriorDraws) -> List[str]:
    if draws.prior is None:
        return []
    fixed = []
    for transition in draws.family.transitions:
        block = draws.prior.transitions.get(TransitionLabel(transition))
        if block is None:
            continue
        fixed.extend(
            f"{transition.value}.{name}" for name in PARAMETER_NAMES if block.for_name(name).fixed is not None
        )
    return fixed


def diagnostics(draws: PosteriorDraws) -> DiagnosticsReport:
    """
    Split R-hat, ESS and MCSE for every parameter, plus acceptance rates.

    Undefined quantities (constant chains, fixed parameters) are reported as
    None with a flag instead of raising.

    Raises:
        ValidationFailure: with fewer than 2 chains or 4 draws per chain
    """
    if draws.n_chains < 2:
        raise ValidationFailure(f"Diagnostics need at least 2 chains, got {draws.n_chains}")
    if draws.n_draws < 4:
        raise ValidationFailure(f"Diagnostics need at least 4 draws per chain, got {draws.n_draws}")

    fixed = set(_fixed_labels(draws))
    items = []
    for label in draws.labels:
        ary = draws.chains(label)
        if label in fixed:
            items.append(ParameterDiagnostics(label=label, fixed=True, flags=["fixed"]))
            continue

        flags = []
        rhat = split_rhat(ary)
        if math.isnan(rhat):
            flags.append("rhat_undefined")
        ess = effective_sample_size(ary)
        if math.isnan(ess):
            flags.append("constant")
        mcse = mcse_mean(ary, ess)
        items.append(ParameterDiagnostics(
            label=label,
            rhat=None if math.isnan(rhat) else rhat,
            ess=None if math.isnan(ess) else ess,
            mcse=None if math.isnan(mcse) else mcse,
            flags=flags,
        ))
        if flags:
            logger.warning("diagnostic_undefined", parameter=label, flags=flags)

    acceptance = {}
    if draws.acceptance is not None:
        for j, transition in enumerate(draws.family.transitions):
            acceptance[transition.value] = [
                None if math.isnan(rate) else float(rate) for rate in draws.acceptance[:, j].tolist()
            ]

    return DiagnosticsReport(
        n_chains=draws.n_chains,
        n_draws=draws.n_draws,
        parameters=items,
        acceptance=acceptance,
    )


def summarize_draws(draws: PosteriorDraws) -> pd.DataFrame:
    """Mean, sd and 2.5/50/97.5% quantiles per parameter, indexed by label."""
    flat = draws.values.reshape(-1, len(draws.labels))
    ddof = 1 if flat.shape[0] > 1 else 0
    quantiles = np.quantile(flat, [0.025, 0.5, 0.975], axis=0)
    table = pd.DataFrame(
        {
            "mean": flat.mean(axis=0),
            "sd": flat.std(axis=0, ddof=ddof),
            "q2.5": quantiles[0],
            "q50": quantiles[1],
            "q97.5": quantiles[2],
        },
        index=pd.Index(draws.labels, name="parameter"),
    )
    return table[SUMMARY_COLUMNS]
