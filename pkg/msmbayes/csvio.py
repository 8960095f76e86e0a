# msmbayes/csvio.py
"""
CSV input and output.

Every file written here starts with a metadata block of ``# key: value``
comment lines (artifact version, model family, priors, seed, RNG, quadrature
settings, ...). The block holds no timestamps, so identical inputs give
byte-identical files.

Dataset CSV columns:
    id, sex (M/W), age, t_first, first_outcome (censored|refracture|death),
    t_second, second_outcome (censored|death; both empty unless refracture)
"""
import io
import math
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from msmbayes.cohort import FIRST_CODES, NO_SECOND, SECOND_CODES, CohortDataset
from msmbayes.errors import DatasetFormatError, DatasetValidationError, ReportWriteError, ValidationFailure
from msmbayes.logger import get_logger
from msmbayes.posterior import PosteriorDraws
from msmbayes.schemas import (
    ChainConfig,
    ModelFamily,
    PriorSpec,
    QuadratureConfig,
    RecordViolation,
    parameter_labels,
)
from msmbayes.settings import ARTIFACT_VERSION

logger = get_logger(__name__)

DATASET_COLUMNS = ["id", "sex", "age", "t_first", "first_outcome", "t_second", "second_outcome"]
TIME_FORMAT = "%.6f"
DRAW_FORMAT = "%.17g"
PROVENANCE_KEYS = ("prior", "seed", "chains", "adaptation")

_SEX_CODES = {"W": 1, "M": 0}
_SEX_BY_CODE = {1: "W", 0: "M"}
_FIRST_BY_NAME = {outcome.value: code for outcome, code in FIRST_CODES.items()}
_SECOND_BY_NAME = {outcome.value: code for outcome, code in SECOND_CODES.items()}
_FIRST_NAMES = {code: outcome.value for outcome, code in FIRST_CODES.items()}
_SECOND_NAMES = {code: outcome.value for outcome, code in SECOND_CODES.items()}

PathLike = Union[str, Path]


# ============================================================================
# METADATA HEADER
# ============================================================================

def build_metadata(
    family: Optional[ModelFamily] = None,
    prior: Optional[PriorSpec] = None,
    chain: Optional[ChainConfig] = None,
    quadrature: Optional[QuadratureConfig] = None,
    age_center: Optional[float] = None,
    rng: Optional[str] = None,
    extra: Optional[Mapping[str, object]] = None,
) -> Dict[str, str]:
    """Ordered metadata block for report headers."""
    meta: Dict[str, str] = {"artifact_version": ARTIFACT_VERSION}
    if family is not None:
        meta["family"] = ModelFamily(family).value
    if prior is not None:
        meta["prior"] = prior.describe()
    if chain is not None:
        meta["seed"] = str(chain.seed)
        meta["chains"] = (f"n_chains={chain.n_chains} iterations={chain.n_iterations} "
                          f"burnin={chain.n_burnin} thin={chain.thin}")
        meta["adaptation"] = (f"start={chain.adaptation_start} interval={chain.adaptation_interval} "
                              f"target_acceptance={chain.target_acceptance:g} frozen_after_burnin=true")
    if rng:
        meta["rng"] = rng
    if quadrature is not None:
        meta["quadrature"] = quadrature.describe()
    if age_center is not None:
        meta["age_center"] = repr(float(age_center))
    for key, value in (extra or {}).items():
        meta[key] = str(value)
    return meta


def draws_metadata(
    draws: PosteriorDraws,
    quadrature: Optional[QuadratureConfig] = None,
    extra: Optional[Mapping[str, object]] = None,
) -> Dict[str, str]:
    """
    Metadata for files derived from posterior draws.

    Draws read back from a file have no prior or chain config; their header
    entries are repeated from ``draws.provenance`` instead.
    """
    meta = build_metadata(draws.family, draws.prior, draws.chain_config, quadrature,
                          draws.age_center, draws.rng)
    for key in PROVENANCE_KEYS:
        if key not in meta and key in draws.provenance:
            meta[key] = draws.provenance[key]
    for key, value in (extra or {}).items():
        meta[key] = str(value)
    return meta


def _header(metadata: Mapping[str, str]) -> str:
    return "".join(f"# {key}: {str(value).replace(chr(10), ' ')}\n" for key, value in metadata.items())


def _split_lines(path: Path) -> Tuple[Dict[str, str], List[Tuple[int, str]]]:
    """Metadata entries and (1-based line number, text) of every data line."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DatasetFormatError(f"File not found: {path}")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetFormatError(f"Cannot read {path}: {exc}")

    metadata: Dict[str, str] = {}
    lines: List[Tuple[int, str]] = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped.lstrip("#").partition(":")
            if sep:
                metadata[key.strip()] = value.strip()
            continue
        lines.append((number, line))
    return metadata, lines


def _read_table(path: Path, required: Sequence[str]) -> Tuple[Dict[str, str], pd.DataFrame, List[int]]:
    metadata, lines = _split_lines(path)
    if not lines:
        raise DatasetFormatError(f"{path}: no header line")
    try:
        frame = pd.read_csv(
            io.StringIO("\n".join(text for _, text in lines)),
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as exc:
        raise DatasetFormatError(f"{path}: malformed CSV: {exc}")
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DatasetFormatError(f"{path}: missing column(s) {', '.join(missing)}")
    return metadata, frame, [number for number, _ in lines[1:]]


# ============================================================================
# DATASETS
# ============================================================================

def parse_dataset_csv(path: PathLike, age_center: Optional[float] = None) -> CohortDataset:
    """
    Read and validate a dataset CSV; ages are centered at ``age_center``, or
    at the mean age when it is None.

    Raises:
        DatasetFormatError: missing file or columns
        DatasetValidationError: unparseable values or broken record rules,
            each violation carrying its line number
    """
    path = Path(path)
    _, frame, line_numbers = _read_table(path, DATASET_COLUMNS)
    for column in frame.columns:
        frame[column] = frame[column].astype(str).str.strip()

    violations: List[RecordViolation] = []

    def bad(index: int, field: str, message: str) -> None:
        violations.append(RecordViolation(
            index=index, record_id=frame.at[index, "id"] or None, line=line_numbers[index],
            field=field, message=message,
        ))

    def numeric(column: str, optional: bool = False) -> np.ndarray:
        raw = frame[column]
        values = pd.to_numeric(raw.where(raw != "", None), errors="coerce").to_numpy(dtype=float)
        for index in np.flatnonzero(np.isnan(values) & (raw != "").to_numpy()):
            bad(int(index), column, f"cannot parse '{raw.iloc[index]}' as a number")
        if not optional:
            for index in np.flatnonzero((raw == "").to_numpy()):
                bad(int(index), column, "value is required")
        return values

    def coded(column: str, mapping: Dict[str, int], empty: Optional[int] = None) -> np.ndarray:
        out = np.empty(len(frame), dtype=np.int64)
        for index, value in enumerate(frame[column].tolist()):
            if value == "" and empty is not None:
                out[index] = empty
            elif value.lower() in mapping:
                out[index] = mapping[value.lower()]
            else:
                out[index] = empty if empty is not None else -1
                bad(index, column, f"'{value}' is not one of {sorted(mapping)}")
        return out

    woman = coded("sex", {k.lower(): v for k, v in _SEX_CODES.items()})
    age = numeric("age")
    t_first = numeric("t_first")
    first_code = coded("first_outcome", _FIRST_BY_NAME)
    t_second = numeric("t_second", optional=True)
    second_code = coded("second_outcome", _SECOND_BY_NAME, empty=NO_SECOND)
    for index in np.flatnonzero(frame["id"].to_numpy() == ""):
        bad(int(index), "id", "value is required")

    if violations:
        violations.sort(key=lambda v: (v.index, v.field))
        raise DatasetValidationError(violations)

    if len(frame) == 0:
        logger.warning("dataset_empty", path=str(path))
        center = 0.0 if age_center is None else age_center
    else:
        center = math.fsum(age.tolist()) / len(frame) if age_center is None else age_center

    try:
        dataset = CohortDataset.from_arrays(
            ids=frame["id"].tolist(), woman=woman, age=age, t_first=t_first, first_code=first_code,
            t_second=t_second, second_code=second_code, age_center=center,
        )
    except DatasetValidationError as exc:
        located = [v.model_copy(update={"line": line_numbers[v.index]}) for v in exc.violations]
        raise DatasetValidationError(located) from None

    logger.info("dataset_parsed", path=str(path), age_center=center, **dataset.counts())
    return dataset


def dataset_frame(dataset: CohortDataset) -> pd.DataFrame:
    return pd.DataFrame({
        "id": dataset.ids.astype(str),
        "sex": [_SEX_BY_CODE[int(w)] for w in dataset.woman],
        "age": dataset.age,
        "t_first": dataset.t_first,
        "first_outcome": [_FIRST_NAMES[int(c)] for c in dataset.first_code],
        "t_second": dataset.t_second,
        "second_outcome": [_SECOND_NAMES.get(int(c), "") for c in dataset.second_code],
    }, columns=DATASET_COLUMNS)


def write_dataset_csv(dataset: CohortDataset, path: PathLike, metadata: Optional[Mapping[str, str]] = None) -> Path:
    """Write a dataset in the format ``parse_dataset_csv`` reads (6-decimal ages and times)."""
    return _write_frame(dataset_frame(dataset), Path(path), metadata or build_metadata(), TIME_FORMAT)


# ============================================================================
# POSTERIOR DRAWS
# ============================================================================

def draws_frame(draws: PosteriorDraws) -> pd.DataFrame:
    n_chains, n_draws, n_params = draws.values.shape
    config = draws.chain_config
    if config is not None:
        iterations = np.arange(config.n_burnin, config.n_iterations, config.thin)[:n_draws]
    else:
        iterations = np.arange(n_draws)
    frame = pd.DataFrame(draws.values.reshape(-1, n_params), columns=draws.labels)
    frame.insert(0, "iteration", np.tile(iterations, n_chains))
    frame.insert(0, "chain", np.repeat(np.arange(n_chains), n_draws))
    return frame


def write_draws_csv(draws: PosteriorDraws, path: PathLike, metadata: Optional[Mapping[str, str]] = None) -> Path:
    """Draws as rows (chain, iteration, one column per parameter), full precision."""
    if metadata is None:
        metadata = draws_metadata(draws)
    return _write_frame(draws_frame(draws), Path(path), metadata, DRAW_FORMAT)


def read_draws_csv(path: PathLike) -> PosteriorDraws:
    """
    Restore draws written by ``write_draws_csv``.

    Raises:
        DatasetFormatError: missing metadata, columns or unequal chain lengths
    """
    path = Path(path)
    metadata, frame, _ = _read_table(path, ["chain", "iteration"])
    for key in ("family", "age_center"):
        if key not in metadata:
            raise DatasetFormatError(f"{path}: metadata entry '{key}' is missing")
    try:
        family = ModelFamily(metadata["family"])
        age_center = float(metadata["age_center"])
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: bad metadata: {exc}")

    labels = parameter_labels(family)
    missing = [label for label in labels if label not in frame.columns]
    if missing:
        raise DatasetFormatError(f"{path}: missing parameter column(s) {', '.join(missing)}")
    if len(frame) == 0:
        raise DatasetFormatError(f"{path}: no draws")

    try:
        chains = frame["chain"].astype(int).to_numpy()
        values = frame[labels].astype(float).to_numpy()
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: non-numeric draw: {exc}")

    chain_ids = np.unique(chains)
    sizes = {int(c): int(np.sum(chains == c)) for c in chain_ids}
    if len(set(sizes.values())) != 1:
        raise DatasetFormatError(f"{path}: chains have different lengths {sizes}")
    stacked = np.stack([values[chains == c] for c in chain_ids])
    logger.info("draws_loaded", path=str(path), family=family.value, chains=len(chain_ids), draws=stacked.shape[1])
    provenance = {key: metadata[key] for key in PROVENANCE_KEYS if key in metadata}
    return PosteriorDraws(family, labels, stacked, age_center, rng=metadata.get("rng", ""), provenance=provenance)


# ============================================================================
# REPORTS
# ============================================================================

class Report(NamedTuple):
    """One output table: file name, contents and value checks."""
    filename: str
    frame: pd.DataFrame
    float_format: str = "%.8g"
    bounded_columns: Tuple[str, ...] = ()
    bounds: Tuple[float, float] = (0.0, 1.0)
    allow_missing: bool = False     # undefined values are written as empty cells


def check_report(report: Report) -> None:
    """
    Raises:
        ValidationFailure: non-finite numbers, or bounded columns out of range
    """
    numeric = report.frame.select_dtypes(include=[np.number]).to_numpy(dtype=float)
    if report.allow_missing:
        numeric = numeric[~np.isnan(numeric)]
    if not np.all(np.isfinite(numeric)):
        raise ValidationFailure(f"{report.filename}: report contains non-finite values")
    lo, hi = report.bounds
    for column in report.bounded_columns:
        values = report.frame[column].to_numpy(dtype=float)
        values = values[~np.isnan(values)] if report.allow_missing else values
        if np.any((values < lo) | (values > hi)):
            raise ValidationFailure(f"{report.filename}: column '{column}' leaves [{lo:g}, {hi:g}]")


def emit_reports(reports: Sequence[Report], outdir: PathLike, metadata: Mapping[str, str]) -> List[Path]:
    """
    Check every report, then write them all under ``outdir``.

    Returns:
        the written paths, in input order

    Raises:
        ValidationFailure: a report fails its value checks (nothing is written)
        ReportWriteError: the directory or a file cannot be written
    """
    for report in reports:
        check_report(report)
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportWriteError(f"Cannot create output directory {outdir}: {exc}")
    manifest = [_write_frame(r.frame, outdir / r.filename, metadata, r.float_format) for r in reports]
    logger.info("reports_written", outdir=str(outdir), files=[p.name for p in manifest])
    return manifest


def _write_frame(frame: pd.DataFrame, path: Path, metadata: Mapping[str, str], float_format: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(_header(metadata))
            frame.to_csv(handle, index=False, float_format=float_format, na_rep="", lineterminator="\n")
    except OSError as exc:
        raise ReportWriteError(f"Cannot write {path}: {exc}")
    return path
