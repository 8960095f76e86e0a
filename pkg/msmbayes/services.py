# msmbayes/services.py
"""
Class-based service layer behind the command-line interface.

Architecture:
- ReportBuilder: turns results (draws, summaries, curves) into checked Report tables
- AnalysisService: simulate, fit, predict, decompose and compare pipelines;
  every pipeline computes first and writes its files last
"""
import math
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from msmbayes.cohort import CohortDataset
from msmbayes.csvio import (
    Report,
    build_metadata,
    draws_metadata,
    emit_reports,
    parse_dataset_csv,
    write_dataset_csv,
    write_draws_csv,
)
from msmbayes.diagnostics import MIN_DRAWS, diagnostics, mcse_mean, summarize_draws
from msmbayes.logger import get_logger
from msmbayes.outcomes import incidence_table, occupancy_decomposition, posterior_curve
from msmbayes.posterior import PosteriorDraws
from msmbayes.sampler import sample_posterior
from msmbayes.schemas import (
    ChainConfig,
    CurveFunctional,
    DiagnosticsReport,
    ModelFamily,
    PriorSpec,
    Profile,
    QuadratureConfig,
    RunConfig,
    SimulationSpec,
    TimeGrid,
)
from msmbayes.simulator import simulate_cohort
from msmbayes.utils import file_stem

logger = get_logger(__name__)

DATASET_FILE = "dataset.csv"
DRAWS_FILE = "draws.csv"
SUMMARY_FILE = "summary.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
ACCEPTANCE_FILE = "acceptance.csv"
INCIDENCE_FILE = "incidence.csv"
COMPARE_FILE = "compare.csv"


class CommandResult(NamedTuple):
    files: List[Path]
    details: Dict[str, float] = {}


def _sd(ary: np.ndarray) -> float:
    return float(np.std(ary, ddof=1)) if ary.size > 1 else math.nan


# ============================================================================
# REPORT BUILDER
# ============================================================================

class ReportBuilder:
    """Shapes results into report tables with their value checks."""

    @staticmethod
    def summary(draws: PosteriorDraws) -> Report:
        frame = summarize_draws(draws).reset_index()
        return Report(SUMMARY_FILE, frame)

    @staticmethod
    def diagnostics(report: DiagnosticsReport) -> Report:
        frame = pd.DataFrame(
            [
                {
                    "parameter": item.label,
                    "rhat": np.nan if item.rhat is None else item.rhat,
                    "ess": np.nan if item.ess is None else item.ess,
                    "mcse": np.nan if item.mcse is None else item.mcse,
                    "flags": ";".join(item.flags),
                }
                for item in report.parameters
            ],
            columns=["parameter", "rhat", "ess", "mcse", "flags"],
        )
        return Report(DIAGNOSTICS_FILE, frame, allow_missing=True)

    @staticmethod
    def acceptance(report: DiagnosticsReport) -> Report:
        rows = [
            {"transition": transition, "chain": chain, "acceptance": np.nan if rate is None else rate}
            for transition, rates in report.acceptance.items()
            for chain, rate in enumerate(rates)
        ]
        frame = pd.DataFrame(rows, columns=["transition", "chain", "acceptance"])
        return Report(ACCEPTANCE_FILE, frame, "%.6f", ("acceptance",), allow_missing=True)

    @staticmethod
    def incidence(table: pd.DataFrame) -> Report:
        return Report(INCIDENCE_FILE, table, "%.4f", ("mean", "lower", "upper"), (0.0, 100.0))

    @staticmethod
    def curves(functional: CurveFunctional, frame: pd.DataFrame) -> Report:
        return Report(f"curve_{functional.value}.csv", frame, "%.8f", ("mean", "lower", "upper"))

    @staticmethod
    def decomposition(profile: Profile, frame: pd.DataFrame) -> Report:
        columns = ("cif_refracture", "occupancy_refracture", "dead_after_refracture")
        return Report(f"decompose_{file_stem(profile.tag)}.csv", frame, "%.8f", columns)


# ============================================================================
# ANALYSIS SERVICE
# ============================================================================

class AnalysisService:
    """
    Pipelines of the command-line interface.
    Each method returns the files it wrote plus headline numbers.
    """

    def __init__(self, reports: Optional[ReportBuilder] = None):
        self.reports = reports or ReportBuilder()
        logger.debug("analysis_service_initialized")

    # ------------------------------------------------------------------
    # data
    # ------------------------------------------------------------------

    def load_dataset(self, config: RunConfig) -> CohortDataset:
        """Parsed dataset file, or a freshly simulated cohort."""
        if config.data_path is not None:
            return parse_dataset_csv(config.data_path, config.age_center)
        dataset = simulate_cohort(config.simulation)
        if config.age_center is not None:
            dataset = dataset.with_age_center(config.age_center)
        return dataset

    def simulate(self, spec: SimulationSpec, outdir: Path) -> CommandResult:
        dataset = simulate_cohort(spec)
        metadata = build_metadata(
            spec.family,
            age_center=dataset.age_center,
            rng="numpy.random.Philox; SeedSequence(seed, spawn_key=(chunk,))",
            extra={
                "seed": spec.seed,
                "true_params": " ".join(f"{k}={v:g}" for k, v in spec.true_params.values().items()),
                "follow_up": (f"horizon={spec.horizon:g} accrual={spec.accrual_years:g}"
                              if spec.accrual_years else f"horizon={spec.horizon:g}"),
            },
        )
        path = write_dataset_csv(dataset, Path(outdir) / DATASET_FILE, metadata)
        logger.info("simulate_completed", path=str(path), **dataset.counts())
        return CommandResult([path], {"subjects": float(len(dataset))})

    # ------------------------------------------------------------------
    # fitting
    # ------------------------------------------------------------------

    def fit_draws(self, config: RunConfig, dataset: Optional[CohortDataset] = None,
                  family: Optional[ModelFamily] = None, chain: Optional[ChainConfig] = None) -> PosteriorDraws:
        dataset = dataset if dataset is not None else self.load_dataset(config)
        family = ModelFamily(family or config.family)
        prior = config.prior if config.prior is not None and config.prior.covers(family) else PriorSpec.default(family)
        return sample_posterior(family, dataset, prior, chain or config.chain)

    def fit(self, config: RunConfig) -> CommandResult:
        """draws.csv, summary.csv and (with at least 2 chains) diagnostics.csv and acceptance.csv."""
        draws = self.fit_draws(config)
        metadata = draws_metadata(draws)
        reports = [self.reports.summary(draws)]
        details: Dict[str, float] = {}
        if draws.n_chains >= 2 and draws.n_draws >= MIN_DRAWS:
            report = diagnostics(draws)
            reports += [self.reports.diagnostics(report), self.reports.acceptance(report)]
            rhats = [p.rhat for p in report.parameters if p.rhat is not None]
            esses = [p.ess for p in report.parameters if p.ess is not None]
            if rhats:
                details["max_rhat"] = max(rhats)
            if esses:
                details["min_ess"] = min(esses)
        else:
            logger.warning("diagnostics_skipped", chains=draws.n_chains, draws=draws.n_draws)

        files = emit_reports(reports, config.output_dir, metadata)
        files.insert(0, write_draws_csv(draws, Path(config.output_dir) / DRAWS_FILE, metadata))
        logger.info("fit_completed", family=draws.family.value, files=len(files), **details)
        return CommandResult(files, details)

    # ------------------------------------------------------------------
    # outcome functionals
    # ------------------------------------------------------------------

    def predict(
        self,
        draws: PosteriorDraws,
        profiles: Sequence[Profile],
        outdir: Path,
        quadrature: Optional[QuadratureConfig] = None,
        grid: Optional[TimeGrid] = None,
        max_draws: Optional[int] = 1000,
        table_max_draws: Optional[int] = None,
    ) -> CommandResult:
        """
        incidence.csv plus one curve file per functional.

        Curves use at most ``max_draws`` draws; the incidence table uses all
        draws unless ``table_max_draws`` is given.
        """
        quadrature = quadrature or QuadratureConfig()
        grid = grid or TimeGrid.regular()
        table = incidence_table(draws, profiles, 1.0, quadrature, max_draws=table_max_draws)
        reports = [self.reports.incidence(table)]

        functionals = [f for f in CurveFunctional
                       if draws.family is ModelFamily.ILLNESS_DEATH or not f.needs_illness_death]
        for functional in functionals:
            rows = []
            for profile in profiles:
                curve = posterior_curve(draws, functional, profile.covariates(draws.age_center), grid,
                                        quadrature, max_draws=max_draws)
                rows.append(pd.DataFrame({
                    "sex": profile.sex, "age": profile.age, "t": list(grid.times),
                    "mean": list(curve.mean), "lower": list(curve.lower), "upper": list(curve.upper),
                }))
            reports.append(self.reports.curves(functional, pd.concat(rows, ignore_index=True)))

        metadata = draws_metadata(draws, quadrature, {"band": "pointwise equal-tailed 95%",
                                                      "curve_draws": max_draws or "all",
                                                      "table_draws": table_max_draws or "all"})
        files = emit_reports(reports, outdir, metadata)
        logger.info("predict_completed", files=len(files))
        return CommandResult(files, {"incidence_cells": float(len(reports[0].frame))})

    def decompose(
        self,
        draws: PosteriorDraws,
        profiles: Sequence[Profile],
        outdir: Path,
        quadrature: Optional[QuadratureConfig] = None,
        grid: Optional[TimeGrid] = None,
        max_draws: Optional[int] = 1000,
    ) -> CommandResult:
        """One refracture decomposition file per profile."""
        quadrature = quadrature or QuadratureConfig()
        grid = grid or TimeGrid.regular()
        reports = []
        for profile in profiles:
            result = occupancy_decomposition(draws, profile.covariates(draws.age_center), grid,
                                             quadrature, max_draws)
            frame = pd.DataFrame({
                "t": list(grid.times),
                "cif_refracture": list(result.cif_refracture),
                "occupancy_refracture": list(result.occupancy_refracture),
                "dead_after_refracture": list(result.dead_after_refracture),
            })
            reports.append(self.reports.decomposition(profile, frame))
        metadata = draws_metadata(draws, quadrature, {"curve_draws": max_draws or "all"})
        files = emit_reports(reports, outdir, metadata)
        logger.info("decompose_completed", files=len(files))
        return CommandResult(files)

    # ------------------------------------------------------------------
    # family comparison
    # ------------------------------------------------------------------

    def compare(self, config: RunConfig, id_seed_offset: int = 0) -> CommandResult:
        """
        Fit both families to one dataset and compare the shared FR and FD parameters.

        With ``id_seed_offset`` 0 both fits share their per-block substreams,
        so the shared blocks come out bit-identical; a nonzero offset gives
        independent chains and a statistical comparison.
        """
        dataset = self.load_dataset(config)
        cr = self.fit_draws(config, dataset, ModelFamily.COMPETING_RISKS)
        id_chain = ChainConfig(**{**config.chain.model_dump(), "seed": config.chain.seed + id_seed_offset})
        ill = self.fit_draws(config, dataset, ModelFamily.ILLNESS_DEATH, id_chain)

        rows = []
        enough = min(cr.n_draws, ill.n_draws) >= MIN_DRAWS
        if not enough:
            logger.warning("mcse_skipped", draws=min(cr.n_draws, ill.n_draws))
        for label in cr.labels:
            a, b = cr.chains(label), ill.chains(label)
            mcse_a, mcse_b = (mcse_mean(a), mcse_mean(b)) if enough else (math.nan, math.nan)
            diff = abs(float(a.mean()) - float(b.mean()))
            combined = math.sqrt(mcse_a ** 2 + mcse_b ** 2) if math.isfinite(mcse_a + mcse_b) else math.nan
            ratio = 0.0 if diff == 0 else (diff / combined if combined > 0 else math.nan)
            rows.append({
                "parameter": label,
                "mean_cr": float(a.mean()), "sd_cr": _sd(a), "mcse_cr": mcse_a,
                "mean_id": float(b.mean()), "sd_id": _sd(b), "mcse_id": mcse_b,
                "abs_diff": diff, "ratio": ratio,
            })
        frame = pd.DataFrame(rows)
        max_ratio = float(frame["ratio"].max())
        metadata = build_metadata(
            cr.family, cr.prior, config.chain, age_center=dataset.age_center, rng=cr.rng,
            extra={"compared_with": "id", "id_seed": id_chain.seed, "max_ratio": f"{max_ratio:.6g}"},
        )
        files = emit_reports([Report(COMPARE_FILE, frame, allow_missing=True)], config.output_dir, metadata)
        logger.info("compare_completed", max_ratio=max_ratio, parameters=len(rows))
        return CommandResult(files, {"max_ratio": max_ratio})


analysis_service = AnalysisService()
