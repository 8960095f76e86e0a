# tests/test_csvio.py
"""
Dataset, draws and report files.
"""
import numpy as np
import pandas as pd
import pytest

from msmbayes.csvio import (
    Report,
    build_metadata,
    draws_metadata,
    emit_reports,
    parse_dataset_csv,
    read_draws_csv,
    write_dataset_csv,
    write_draws_csv,
)
from msmbayes.errors import DatasetFormatError, DatasetValidationError, ReportWriteError, ValidationFailure
from msmbayes.posterior import PosteriorDraws
from msmbayes.reference import reference_parameters
from msmbayes.schemas import ChainConfig, ModelFamily, PriorSpec, SimulationSpec, parameter_labels
from msmbayes.settings import ARTIFACT_VERSION
from msmbayes.simulator import simulate_cohort

ID = ModelFamily.ILLNESS_DEATH

HEADER = "id,sex,age,t_first,first_outcome,t_second,second_outcome\n"


@pytest.fixture
def cohort():
    spec = SimulationSpec(family=ID, true_params=reference_parameters(ID), n_subjects=300,
                          accrual_years=2.0, seed=3)
    return simulate_cohort(spec)


# ============================================================================
# DATASETS
# ============================================================================

def test_dataset_round_trip_is_exact(cohort, tmp_path):
    path = write_dataset_csv(cohort, tmp_path / "dataset.csv")
    parsed = parse_dataset_csv(path, age_center=cohort.age_center)
    assert parsed.equals(cohort)


def test_dataset_file_is_byte_identical_when_rewritten(cohort, tmp_path):
    first = write_dataset_csv(cohort, tmp_path / "a.csv")
    second = write_dataset_csv(parse_dataset_csv(first, cohort.age_center), tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()


def test_metadata_header_is_written_and_skipped(cohort, tmp_path):
    path = write_dataset_csv(cohort, tmp_path / "dataset.csv", build_metadata(ID, age_center=83.4))
    lines = path.read_text().splitlines()
    assert lines[0] == f"# artifact_version: {ARTIFACT_VERSION}"
    assert lines[1] == "# family: id"
    assert lines[3] == HEADER.strip()


def test_auto_center_is_mean_age(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(HEADER + "a,W,80,1.5,censored,,\n"
                             "b,M,90,0.5,refracture,1.0,death\n")
    dataset = parse_dataset_csv(path)
    assert dataset.age_center == 85.0
    assert dataset.counts()["deaths_after_refracture"] == 1


def test_violations_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# family: id\n" + HEADER
                    + "a,W,80,1.5,censored,,\n"
                      "b,X,90,0.5,refracture,1.0,death\n"
                      "c,M,abc,0.5,death,,\n"
                      "d,M,70,0.5,refracture,,\n")
    with pytest.raises(DatasetValidationError) as exc_info:
        parse_dataset_csv(path)
    found = {(v.line, v.field) for v in exc_info.value.violations}
    assert (4, "sex") in found
    assert (5, "age") in found
    assert "line 4" in str(exc_info.value)


def test_record_rules_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(HEADER + "a,W,80,1.5,censored,,\n"
                             "d,M,70,0.5,refracture,,\n")
    with pytest.raises(DatasetValidationError) as exc_info:
        parse_dataset_csv(path)
    violations = exc_info.value.violations
    assert {v.line for v in violations} == {3}
    assert "post_refracture" in {v.field for v in violations}


def test_missing_column_is_a_format_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,sex,age\na,W,80\n")
    with pytest.raises(DatasetFormatError):
        parse_dataset_csv(path)


def test_missing_file_is_a_format_error(tmp_path):
    with pytest.raises(DatasetFormatError):
        parse_dataset_csv(tmp_path / "nope.csv")


def test_header_only_file_is_an_empty_dataset(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(HEADER)
    dataset = parse_dataset_csv(path)
    assert len(dataset) == 0
    assert dataset.age_center == 0.0


# ============================================================================
# DRAWS
# ============================================================================

def test_draws_round_trip(tmp_path):
    labels = parameter_labels(ID)
    values = np.random.default_rng(0).uniform(0.1, 2.0, size=(2, 6, len(labels)))
    config = ChainConfig(n_chains=2, n_iterations=16, n_burnin=10, seed=4)
    draws = PosteriorDraws(ID, labels, values, 83.4123456789, config, PriorSpec.default(ID), rng="philox")
    path = write_draws_csv(draws, tmp_path / "draws.csv")

    restored = read_draws_csv(path)
    np.testing.assert_array_equal(restored.values, values)
    assert restored.age_center == 83.4123456789
    assert restored.family is ID

    frame = pd.read_csv(path, comment="#")
    assert list(frame["iteration"][:6]) == list(range(10, 16))
    assert list(frame.columns[:2]) == ["chain", "iteration"]


def test_draws_file_keeps_prior_and_seed(tmp_path):
    labels = parameter_labels(ID)
    values = np.random.default_rng(1).uniform(0.1, 2.0, size=(2, 4, len(labels)))
    config = ChainConfig(n_chains=2, n_iterations=14, n_burnin=10, seed=77)
    prior = PriorSpec.default(ID)
    path = write_draws_csv(PosteriorDraws(ID, labels, values, 83.4, config, prior), tmp_path / "draws.csv")

    restored = read_draws_csv(path)
    assert restored.provenance["seed"] == "77"
    assert restored.provenance["prior"] == prior.describe()
    assert restored.provenance["chains"].startswith("n_chains=2 ")
    meta = draws_metadata(restored, extra={"band": "pointwise"})
    assert meta["seed"] == "77"
    assert meta["prior"] == prior.describe()
    assert meta["band"] == "pointwise"


def test_draws_without_family_metadata_are_rejected(tmp_path):
    path = tmp_path / "draws.csv"
    path.write_text("chain,iteration,FR.alpha\n0,0,1.0\n")
    with pytest.raises(DatasetFormatError):
        read_draws_csv(path)


# ============================================================================
# REPORTS
# ============================================================================

def test_emit_reports_checks_before_writing(tmp_path):
    good = Report("good.csv", pd.DataFrame({"x": [0.5]}), bounded_columns=("x",))
    bad = Report("bad.csv", pd.DataFrame({"x": [1.5]}), bounded_columns=("x",))
    with pytest.raises(ValidationFailure):
        emit_reports([good, bad], tmp_path / "out", {"artifact_version": ARTIFACT_VERSION})
    assert not (tmp_path / "out" / "good.csv").exists()


def test_emit_reports_writes_missing_values_as_empty_cells(tmp_path):
    report = Report("diag.csv", pd.DataFrame({"parameter": ["a"], "rhat": [np.nan]}), allow_missing=True)
    [path] = emit_reports([report], tmp_path, {"artifact_version": ARTIFACT_VERSION})
    assert path.read_text().splitlines()[-1] == "a,"


def test_non_finite_report_is_rejected(tmp_path):
    report = Report("x.csv", pd.DataFrame({"x": [np.inf]}))
    with pytest.raises(ValidationFailure):
        emit_reports([report], tmp_path, {})


def test_unwritable_directory_is_reported(tmp_path):
    blocker = tmp_path / "occupied"
    blocker.write_text("not a directory")
    report = Report("x.csv", pd.DataFrame({"x": [0.5]}))
    with pytest.raises(ReportWriteError):
        emit_reports([report], blocker / "out", {})
