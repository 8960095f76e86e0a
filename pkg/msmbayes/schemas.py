# msmbayes/schemas.py
"""
Pydantic models for the domain types and every configuration object.
Validators enforce the invariants at construction time.
"""
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ============================================================================
# ENUMERATIONS
# ============================================================================

class TransitionLabel(str, Enum):
    """Fracture to refracture, fracture to death, refracture to death."""
    FR = "FR"
    FD = "FD"
    RD = "RD"

    @property
    def block_index(self) -> int:
        return _BLOCK_INDEX[self]


_BLOCK_INDEX = {TransitionLabel.FR: 0, TransitionLabel.FD: 1, TransitionLabel.RD: 2}


class ModelFamily(str, Enum):
    COMPETING_RISKS = "cr"
    ILLNESS_DEATH = "id"

    @property
    def transitions(self) -> Tuple[TransitionLabel, ...]:
        if self is ModelFamily.COMPETING_RISKS:
            return (TransitionLabel.FR, TransitionLabel.FD)
        return (TransitionLabel.FR, TransitionLabel.FD, TransitionLabel.RD)


class FirstOutcome(str, Enum):
    CENSORED = "censored"
    REFRACTURE = "refracture"
    DEATH = "death"


class SecondOutcome(str, Enum):
    CENSORED = "censored"
    DEATH = "death"


class StartState(str, Enum):
    HEALTHY = "healthy"
    REFRACTURED = "refractured"


PARAMETER_NAMES: Tuple[str, ...] = ("alpha", "lambda", "beta_sex", "beta_age")


def parameter_label(transition: TransitionLabel, name: str) -> str:
    """Label such as ``FR.alpha`` used in draws files and summaries."""
    return f"{transition.value}.{name}"


def parameter_labels(family: ModelFamily) -> List[str]:
    return [parameter_label(tr, name) for tr in family.transitions for name in PARAMETER_NAMES]


# ============================================================================
# HAZARD MODEL
# ============================================================================

class WeibullShapeScale(BaseModel):
    """Weibull baseline h0(t) = shape * scale * t**(shape - 1)."""
    model_config = ConfigDict(frozen=True)

    shape: float = Field(..., gt=0, allow_inf_nan=False, description="alpha, dimensionless")
    scale: float = Field(..., gt=0, allow_inf_nan=False, description="lambda, years**(-alpha)")


class RegressionCoefficients(BaseModel):
    """Log hazard ratios for the woman indicator and per year of centered age."""
    model_config = ConfigDict(frozen=True)

    beta_sex: float = Field(0.0, allow_inf_nan=False)
    beta_age: float = Field(0.0, allow_inf_nan=False)


class CovariateVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    woman_indicator: int = Field(..., ge=0, le=1)
    age_centered: float = Field(..., allow_inf_nan=False)

    @classmethod
    def for_profile(cls, woman_indicator: int, age: float, age_center: float) -> "CovariateVector":
        return cls(woman_indicator=woman_indicator, age_centered=age - age_center)


class TransitionParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: TransitionLabel
    baseline: WeibullShapeScale
    coeffs: RegressionCoefficients = RegressionCoefficients()

    @classmethod
    def of(
        cls,
        label: TransitionLabel,
        alpha: float,
        lam: float,
        beta_sex: float = 0.0,
        beta_age: float = 0.0,
    ) -> "TransitionParams":
        """Shorthand constructor from the four scalar parameters."""
        return cls(
            label=TransitionLabel(label),
            baseline=WeibullShapeScale(shape=alpha, scale=lam),
            coeffs=RegressionCoefficients(beta_sex=beta_sex, beta_age=beta_age),
        )

    def value(self, name: str) -> float:
        return {
            "alpha": self.baseline.shape,
            "lambda": self.baseline.scale,
            "beta_sex": self.coeffs.beta_sex,
            "beta_age": self.coeffs.beta_age,
        }[name]


class ParameterSet(BaseModel):
    """One value for every parameter of a model family."""
    model_config = ConfigDict(frozen=True)

    family: ModelFamily
    transitions: Dict[TransitionLabel, TransitionParams]

    @model_validator(mode="after")
    def labels_match_family(self) -> "ParameterSet":
        expected = set(self.family.transitions)
        if set(self.transitions) != expected:
            raise ValueError(
                f"{self.family.value} parameter sets need exactly "
                f"{sorted(t.value for t in expected)}, got {sorted(t.value for t in self.transitions)}"
            )
        for key, tp in self.transitions.items():
            if tp.label != key:
                raise ValueError(f"Transition stored under {key.value} is labelled {tp.label.value}")
        return self

    @classmethod
    def from_transitions(cls, family: ModelFamily, tps: List[TransitionParams]) -> "ParameterSet":
        return cls(family=family, transitions={tp.label: tp for tp in tps})

    def __getitem__(self, label: TransitionLabel) -> TransitionParams:
        return self.transitions[TransitionLabel(label)]

    def restrict(self, family: ModelFamily) -> "ParameterSet":
        """Keep only the transitions of ``family`` (illness-death to competing risks)."""
        return ParameterSet(
            family=family,
            transitions={label: self.transitions[label] for label in family.transitions},
        )

    def values(self) -> Dict[str, float]:
        """Flat ``label -> value`` mapping in canonical order."""
        return {
            parameter_label(label, name): self.transitions[label].value(name)
            for label in self.family.transitions
            for name in PARAMETER_NAMES
        }


# ============================================================================
# EVENT-HISTORY RECORDS
# ============================================================================

class PostRefracture(BaseModel):
    """Follow-up after refracture on the clock-reset timescale."""
    model_config = ConfigDict(frozen=True)

    t_second: float = Field(..., gt=0, allow_inf_nan=False)
    second_outcome: SecondOutcome


class SubjectRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    woman_indicator: int = Field(..., ge=0, le=1)
    age_at_discharge: float = Field(..., ge=0, allow_inf_nan=False)
    t_first: float = Field(..., gt=0, allow_inf_nan=False)
    first_outcome: FirstOutcome
    post_refracture: Optional[PostRefracture] = None

    @model_validator(mode="after")
    def follow_up_matches_outcome(self) -> "SubjectRecord":
        refractured = self.first_outcome is FirstOutcome.REFRACTURE
        if refractured and self.post_refracture is None:
            raise ValueError("post_refracture is required when first_outcome is refracture")
        if not refractured and self.post_refracture is not None:
            raise ValueError(
                f"post_refracture must be absent when first_outcome is {self.first_outcome.value}"
            )
        return self


class RecordViolation(BaseModel):
    """A single broken rule in a single record."""
    index: int = Field(..., description="Zero-based position in the record list")
    record_id: Optional[str] = None
    line: Optional[int] = Field(None, description="1-based line in the source file, when known")
    field: str
    message: str

    def describe(self) -> str:
        where = f"line {self.line}" if self.line is not None else f"record {self.index}"
        who = f" ({self.record_id})" if self.record_id else ""
        return f"{where}{who}: {self.field}: {self.message}"


# ============================================================================
# PRIORS
# ============================================================================

class NormalPrior(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float = Field(0.0, allow_inf_nan=False)
    sd: float = Field(100.0, gt=0, allow_inf_nan=False)
    fixed: Optional[float] = Field(None, allow_inf_nan=False, description="Hold at this value")


class GammaPrior(BaseModel):
    """Gamma(shape, rate) prior on a positive parameter."""
    model_config = ConfigDict(frozen=True)

    shape: float = Field(0.01, gt=0, allow_inf_nan=False)
    rate: float = Field(0.01, gt=0, allow_inf_nan=False)
    fixed: Optional[float] = Field(None, gt=0, allow_inf_nan=False)

    @property
    def mode(self) -> Optional[float]:
        return (self.shape - 1.0) / self.rate if self.shape > 1 else None


class TransitionPrior(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: GammaPrior = GammaPrior()
    lam: GammaPrior = GammaPrior()
    beta_sex: NormalPrior = NormalPrior()
    beta_age: NormalPrior = NormalPrior()

    def for_name(self, name: str):
        return {"alpha": self.alpha, "lambda": self.lam,
                "beta_sex": self.beta_sex, "beta_age": self.beta_age}[name]


class PriorSpec(BaseModel):
    """Independent priors, one block per transition."""
    model_config = ConfigDict(frozen=True)

    transitions: Dict[TransitionLabel, TransitionPrior]

    @classmethod
    def default(cls, family: ModelFamily = ModelFamily.ILLNESS_DEATH) -> "PriorSpec":
        """Wide normal(0, 100) on coefficients, gamma(0.01, 0.01) on shapes and scales."""
        return cls(transitions={label: TransitionPrior() for label in family.transitions})

    def covers(self, family: ModelFamily) -> bool:
        return set(family.transitions) <= set(self.transitions)

    def describe(self) -> str:
        parts = []
        for label in sorted(self.transitions, key=lambda t: t.block_index):
            tp = self.transitions[label]
            for name in PARAMETER_NAMES:
                prior = tp.for_name(name)
                if prior.fixed is not None:
                    parts.append(f"{label.value}.{name}=fixed({prior.fixed:g})")
                elif isinstance(prior, GammaPrior):
                    parts.append(f"{label.value}.{name}~gamma({prior.shape:g},{prior.rate:g})")
                else:
                    parts.append(f"{label.value}.{name}~normal({prior.mean:g},{prior.sd:g})")
        return " ".join(parts)


# ============================================================================
# SAMPLER AND QUADRATURE CONFIGURATION
# ============================================================================

class ChainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_chains: int = Field(4, ge=1, description="At least 2 for convergence diagnostics")
    n_iterations: int = Field(10_000, gt=0)
    n_burnin: int = Field(5_000, gt=0)
    thin: int = Field(1, ge=1)
    seed: int = Field(2024, ge=0, lt=2**64)
    adaptation_start: int = Field(100, ge=10, description="Iterations before the first covariance update")
    adaptation_interval: int = Field(100, ge=1)
    target_acceptance: float = Field(0.234, gt=0, lt=1)
    initial_step: float = Field(0.1, gt=0, description="Initial proposal sd on the transformed scale")
    jitter_sd: float = Field(0.1, ge=0, description="Chain-start jitter on the transformed scale")
    max_divergent: int = Field(1_000, ge=1)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def retains_draws(self) -> "ChainConfig":
        if self.n_burnin >= self.n_iterations:
            raise ValueError(
                f"n_burnin ({self.n_burnin}) must be smaller than n_iterations "
                f"({self.n_iterations}); no draws would be retained"
            )
        return self

    @property
    def n_retained(self) -> int:
        return len(range(self.n_burnin, self.n_iterations, self.thin))


class QuadratureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    nodes: int = Field(64, ge=2, description="Gauss-Legendre nodes per panel")
    panels_per_year: int = Field(8, ge=1)
    min_panels: int = Field(4, ge=1)
    tolerance: float = Field(1e-7, gt=0)
    max_refinements: int = Field(3, ge=0)
    singular_floor: float = Field(1e-13, gt=0, description="Mass left in the innermost graded panel")
    max_grading_levels: int = Field(200, ge=0)

    def describe(self) -> str:
        return (f"gauss-legendre nodes={self.nodes} panels_per_year={self.panels_per_year} "
                f"min_panels={self.min_panels} grading=geometric(2) tolerance={self.tolerance:g}")


# ============================================================================
# OUTCOME CURVES
# ============================================================================

class CurveFunctional(str, Enum):
    """Probability curves available from posterior draws."""
    CIF_FR = "cif_fr"
    CIF_FD = "cif_fd"
    P11 = "p11"
    P12 = "p12"
    P13 = "p13"
    P22 = "p22"
    P23 = "p23"

    @property
    def needs_illness_death(self) -> bool:
        return self in (CurveFunctional.P22, CurveFunctional.P23)


class TimeGrid(BaseModel):
    """Strictly increasing, finite, nonnegative times in years."""
    model_config = ConfigDict(frozen=True)

    times: Tuple[float, ...]

    @field_validator("times")
    @classmethod
    def strictly_increasing(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v:
            raise ValueError("time grid is empty")
        if any(t != t or t in (float("inf"), float("-inf")) for t in v):
            raise ValueError("time grid values must be finite")
        if v[0] < 0:
            raise ValueError("time grid must start at or after 0")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("time grid must be strictly increasing")
        return v

    @classmethod
    def regular(cls, stop: float = 5.0, step: float = 0.25, start: float = 0.0) -> "TimeGrid":
        """start, start + step, ... up to stop (included when it falls on the grid)."""
        if not step > 0 or stop < start:
            raise ValueError("regular grid needs step > 0 and stop >= start")
        count = int(round((stop - start) / step)) + 1
        times = [round(start + k * step, 12) for k in range(count)]
        return cls(times=tuple(t for t in times if t <= stop + 1e-12))

    def __len__(self) -> int:
        return len(self.times)


class CurveEstimate(BaseModel):
    """Pointwise posterior mean and equal-tailed credible band of a curve."""
    model_config = ConfigDict(frozen=True)

    functional: CurveFunctional
    grid: TimeGrid
    mean: Tuple[float, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    level: float = Field(0.95, gt=0, lt=1)
    n_draws: int = Field(..., ge=1)
    t12: Optional[float] = None

    @model_validator(mode="after")
    def band_contains_mean(self) -> "CurveEstimate":
        if not len(self.mean) == len(self.lower) == len(self.upper) == len(self.grid):
            raise ValueError("curve arrays must match the grid length")
        for lo, m, hi in zip(self.lower, self.mean, self.upper):
            if not (0.0 <= lo <= m <= hi <= 1.0):
                raise ValueError(f"band [{lo}, {hi}] must contain the mean {m} within [0, 1]")
        return self


class OccupancyDecomposition(BaseModel):
    """
    Refracture curves of the illness-death model, as posterior means:
    ever refractured (CIF), alive in the refracture state (p12), and their
    difference, refractured patients who have since died.
    """
    model_config = ConfigDict(frozen=True)

    grid: TimeGrid
    cif_refracture: Tuple[float, ...]
    occupancy_refracture: Tuple[float, ...]
    dead_after_refracture: Tuple[float, ...]

    @model_validator(mode="after")
    def nested(self) -> "OccupancyDecomposition":
        for occ, cif in zip(self.occupancy_refracture, self.cif_refracture):
            if not 0.0 <= occ <= cif <= 1.0:
                raise ValueError(f"expected 0 <= occupancy ({occ}) <= cif ({cif}) <= 1")
        return self


# ============================================================================
# CONVERGENCE DIAGNOSTICS
# ============================================================================

class ParameterDiagnostics(BaseModel):
    """Convergence summary of one parameter; None marks an undefined quantity."""
    label: str
    rhat: Optional[float] = Field(None, description="Split R-hat")
    ess: Optional[float] = Field(None, ge=0, description="Effective sample size, capped at total draws")
    mcse: Optional[float] = Field(None, ge=0, description="Monte-Carlo standard error of the mean")
    fixed: bool = False
    flags: List[str] = Field(default_factory=list)


class DiagnosticsReport(BaseModel):
    n_chains: int
    n_draws: int
    parameters: List[ParameterDiagnostics]
    acceptance: Dict[str, List[Optional[float]]] = Field(
        default_factory=dict, description="Per transition, post-burn-in acceptance rate of each chain"
    )

    @field_validator("acceptance")
    @classmethod
    def rates_in_unit_interval(cls, v: Dict[str, List[Optional[float]]]) -> Dict[str, List[Optional[float]]]:
        for label, rates in v.items():
            if any(r is not None and not 0.0 <= r <= 1.0 for r in rates):
                raise ValueError(f"acceptance rates of {label} must lie in [0, 1]")
        return v

    def __getitem__(self, label: str) -> ParameterDiagnostics:
        for item in self.parameters:
            if item.label == label:
                return item
        raise KeyError(label)

    def converged(self, max_rhat: float = 1.01, min_ess: float = 400.0) -> bool:
        """True when every sampled parameter has R-hat and ESS within the thresholds."""
        return all(
            item.rhat is not None and item.rhat < max_rhat and item.ess is not None and item.ess > min_ess
            for item in self.parameters
            if not item.fixed
        )


# ============================================================================
# SIMULATION
# ============================================================================

class CovariateModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    woman_probability: float = Field(0.748, ge=0, le=1)
    age_mean: float = Field(83.4, allow_inf_nan=False)
    age_sd: float = Field(6.0, gt=0, allow_inf_nan=False)
    age_min: float = Field(65.0, ge=0, allow_inf_nan=False)
    age_max: float = Field(105.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def bounds_ordered(self) -> "CovariateModel":
        if not self.age_min < self.age_max:
            raise ValueError("age_min must be smaller than age_max")
        return self


class SimulationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: ModelFamily
    true_params: ParameterSet
    n_subjects: int = Field(..., ge=0)
    covariates: CovariateModel = CovariateModel()
    horizon: float = Field(8.0, gt=0, allow_inf_nan=False, description="End of study, years after entry")
    accrual_years: Optional[float] = Field(
        None, gt=0, description="Uniform entry over this window; None means everyone enters at 0"
    )
    age_center: Optional[float] = Field(None, allow_inf_nan=False)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def consistent(self) -> "SimulationSpec":
        if self.true_params.family != self.family:
            raise ValueError("true_params belong to a different model family")
        if self.accrual_years is not None and self.accrual_years >= self.horizon:
            raise ValueError("accrual_years must be shorter than horizon")
        return self


# ============================================================================
# PROFILES AND RUN CONFIGURATION
# ============================================================================

class Profile(BaseModel):
    """A (sex, age) covariate profile such as ``w:70``."""
    model_config = ConfigDict(frozen=True)

    woman_indicator: int = Field(..., ge=0, le=1)
    age: float = Field(..., ge=0, allow_inf_nan=False)

    @property
    def sex(self) -> str:
        return "W" if self.woman_indicator == 1 else "M"

    @property
    def tag(self) -> str:
        age = int(self.age) if float(self.age).is_integer() else self.age
        return f"{self.sex.lower()}{age}"

    def covariates(self, age_center: float) -> CovariateVector:
        return CovariateVector.for_profile(self.woman_indicator, self.age, age_center)


DEFAULT_PROFILES: Tuple[Profile, ...] = tuple(
    Profile(woman_indicator=w, age=a) for w in (1, 0) for a in (70.0, 80.0, 90.0)
)


class RunConfig(BaseModel):
    """Everything one CLI command needs."""
    model_config = ConfigDict(frozen=True)

    family: ModelFamily = ModelFamily.ILLNESS_DEATH
    prior: Optional[PriorSpec] = None
    chain: ChainConfig = ChainConfig()
    quadrature: QuadratureConfig = QuadratureConfig()
    profiles: Tuple[Profile, ...] = DEFAULT_PROFILES
    output_dir: Path = Path(".")
    data_path: Optional[Path] = None
    simulation: Optional[SimulationSpec] = None
    age_center: Optional[float] = Field(None, allow_inf_nan=False, description="None means dataset mean")

    @field_validator("profiles")
    @classmethod
    def profiles_non_empty(cls, v: Tuple[Profile, ...]) -> Tuple[Profile, ...]:
        if not v:
            raise ValueError("at least one profile is required")
        return v

    @model_validator(mode="after")
    def one_data_source(self) -> "RunConfig":
        if (self.data_path is None) == (self.simulation is None):
            raise ValueError("exactly one of data_path or simulation must be given")
        return self

    @property
    def prior_spec(self) -> PriorSpec:
        return self.prior if self.prior is not None else PriorSpec.default(self.family)
