# tests/test_cli.py
"""
End-to-end runs of the command-line interface and the service layer.
"""
import pandas as pd
import pytest

from msmbayes.errors import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, DivergentTargetError
from msmbayes.main import run_command
from msmbayes.schemas import ChainConfig, ModelFamily, RunConfig
from msmbayes.services import analysis_service

CHAIN_FLAGS = ["--chains", "2", "--iters", "600", "--burnin", "300"]


def _read(path):
    return pd.read_csv(path, comment="#")


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    """Simulated illness-death cohort and a short fit of it."""
    root = tmp_path_factory.mktemp("run")
    assert run_command(["simulate", "--family", "id", "--n", "800", "--seed", "7",
                        "--out", str(root / "sim")]) == EXIT_OK
    assert run_command(["fit", "--family", "id", "--data", str(root / "sim" / "dataset.csv"),
                        "--out", str(root / "fit"), "--seed", "3", *CHAIN_FLAGS]) == EXIT_OK
    return root


# ============================================================================
# USAGE
# ============================================================================

def test_missing_subcommand_is_usage_error(capsys):
    assert run_command([]) == EXIT_USAGE
    assert "subcommand" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert run_command(["fit", "--bogus"]) == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert run_command(["--help"]) == EXIT_OK
    assert "simulate" in capsys.readouterr().out


def test_fit_needs_a_data_source(tmp_path):
    assert run_command(["fit", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_burnin_not_below_iterations_is_rejected(tmp_path):
    assert run_command(["fit", "--n", "50", "--iters", "100", "--burnin", "100",
                        "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_numerical_failures_map_to_exit_two():
    assert DivergentTargetError.exit_code == EXIT_NUMERICAL


# ============================================================================
# SIMULATE AND FIT
# ============================================================================

def test_simulate_is_byte_identical(tmp_path, capsys):
    args = ["simulate", "--family", "cr", "--n", "200", "--seed", "11"]
    assert run_command([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert run_command([*args, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "dataset.csv").read_bytes() == (tmp_path / "b" / "dataset.csv").read_bytes()
    assert str(tmp_path / "a" / "dataset.csv") in capsys.readouterr().out


def test_invalid_dataset_exits_with_validation_error(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("id,sex,age,t_first,first_outcome,t_second,second_outcome\na,W,80,-1,censored,,\n")
    assert run_command(["fit", "--data", str(path), "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert "line 2" in capsys.readouterr().err


def test_fit_writes_reports(fitted):
    out = fitted / "fit"
    for name in ("draws.csv", "summary.csv", "diagnostics.csv", "acceptance.csv"):
        assert (out / name).is_file()
    draws = _read(out / "draws.csv")
    assert len(draws) == 2 * 300
    summary = _read(out / "summary.csv")
    assert len(summary) == 12
    assert (summary["q2.5"] <= summary["q97.5"]).all()
    acceptance = _read(out / "acceptance.csv")
    assert acceptance["acceptance"].between(0, 1).all()


def test_fit_is_reproducible(fitted, tmp_path):
    args = ["fit", "--family", "id", "--data", str(fitted / "sim" / "dataset.csv"),
            "--seed", "3", "--workers", "3", *CHAIN_FLAGS, "--out", str(tmp_path)]
    assert run_command(args) == EXIT_OK
    assert (tmp_path / "draws.csv").read_bytes() == (fitted / "fit" / "draws.csv").read_bytes()


def test_config_file_values_and_flag_precedence(fitted, tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text(f"family=id\ndata={fitted / 'sim' / 'dataset.csv'}\nchains=2\niters=600\n"
                      "burnin=300\nseed=99\n")
    assert run_command(["fit", "--config", str(config), "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "draws.csv").read_bytes() == (fitted / "fit" / "draws.csv").read_bytes()


# ============================================================================
# PREDICT AND DECOMPOSE
# ============================================================================

def test_predict_incidence_table(fitted, tmp_path):
    args = ["predict", "--draws", str(fitted / "fit" / "draws.csv"), "--out", str(tmp_path),
            "--grid-max", "1", "--grid-step", "0.5", "--max-draws", "20"]
    assert run_command(args) == EXIT_OK
    table = _read(tmp_path / "incidence.csv")
    assert len(table) == 18
    assert set(table["transition"]) == {"FR", "FD", "RD"}
    assert ((table["lower"] <= table["mean"]) & (table["mean"] <= table["upper"])).all()
    for name in ("cif_fr", "cif_fd", "p11", "p12", "p13", "p22", "p23"):
        curve = _read(tmp_path / f"curve_{name}.csv")
        assert len(curve) == 6 * 3


def _header_lines(path, keys):
    lines = [line for line in path.read_text().splitlines() if line.startswith("#")]
    return {line for line in lines if line.split(":", 1)[0].lstrip("# ") in keys}


def test_predict_report_repeats_fit_provenance(fitted, tmp_path):
    args = ["predict", "--draws", str(fitted / "fit" / "draws.csv"), "--out", str(tmp_path),
            "--grid-max", "0.5", "--max-draws", "10"]
    assert run_command(args) == EXIT_OK
    keys = {"prior", "seed", "chains"}
    expected = _header_lines(fitted / "fit" / "draws.csv", keys)
    assert len(expected) == 3
    assert "# seed: 3" in expected
    assert _header_lines(tmp_path / "incidence.csv", keys) == expected
    assert _header_lines(tmp_path / "curve_p12.csv", keys) == expected


def test_table_draws_caps_the_incidence_table(fitted, tmp_path):
    args = ["predict", "--draws", str(fitted / "fit" / "draws.csv"), "--out", str(tmp_path),
            "--grid-max", "0.5", "--max-draws", "10", "--table-draws", "1"]
    assert run_command(args) == EXIT_OK
    table = _read(tmp_path / "incidence.csv")
    assert (table["lower"] == table["mean"]).all()
    assert (table["mean"] == table["upper"]).all()
    header = (tmp_path / "incidence.csv").read_text()
    assert "# table_draws: 1\n" in header
    assert "# curve_draws: 10\n" in header


def test_predict_follows_published_pattern(fitted, tmp_path):
    """Death without refracture rises with age and is higher for men."""
    args = ["predict", "--draws", str(fitted / "fit" / "draws.csv"), "--out", str(tmp_path),
            "--profiles", "w:70,w:90,m:90", "--grid-max", "0.5", "--max-draws", "10"]
    assert run_command(args) == EXIT_OK
    fd = _read(tmp_path / "incidence.csv").query("transition == 'FD'").set_index(["sex", "age"])["mean"]
    assert fd[("W", 90.0)] > fd[("W", 70.0)]
    assert fd[("M", 90.0)] > fd[("W", 90.0)]


def test_decompose_writes_one_file_per_profile(fitted, tmp_path):
    args = ["decompose", "--draws", str(fitted / "fit" / "draws.csv"), "--out", str(tmp_path),
            "--profiles", "w:80,m:80", "--grid-max", "2", "--grid-step", "1", "--max-draws", "10"]
    assert run_command(args) == EXIT_OK
    frame = _read(tmp_path / "decompose_w80.csv")
    assert (tmp_path / "decompose_m80.csv").is_file()
    assert list(frame["t"]) == [0.0, 1.0, 2.0]
    assert (frame["occupancy_refracture"] <= frame["cif_refracture"]).all()


def test_decompose_rejects_competing_risks_draws(tmp_path):
    assert run_command(["fit", "--family", "cr", "--n", "300", *CHAIN_FLAGS,
                        "--out", str(tmp_path / "fit")]) == EXIT_OK
    assert run_command(["decompose", "--draws", str(tmp_path / "fit" / "draws.csv"),
                        "--out", str(tmp_path / "dec")]) == EXIT_VALIDATION


# ============================================================================
# COMPARE
# ============================================================================

def test_compare_shared_substreams_give_zero_ratio(fitted, tmp_path):
    args = ["compare", "--data", str(fitted / "sim" / "dataset.csv"), *CHAIN_FLAGS, "--out", str(tmp_path)]
    assert run_command(args) == EXIT_OK
    frame = _read(tmp_path / "compare.csv")
    assert len(frame) == 8
    assert (frame["abs_diff"] == 0).all()
    assert (frame["ratio"] == 0).all()


def test_compare_with_single_retained_draw(tmp_path):
    """One draw per chain: MCSE is undefined and left empty, the command still succeeds."""
    args = ["compare", "--n", "50", "--chains", "2", "--iters", "2", "--burnin", "1", "--out", str(tmp_path)]
    assert run_command(args) == EXIT_OK
    frame = _read(tmp_path / "compare.csv")
    assert len(frame) == 8
    assert frame["mcse_cr"].isna().all()
    assert frame["mcse_id"].isna().all()
    assert (frame["ratio"] == 0).all()


@pytest.fixture(scope="module")
def large_cohort(tmp_path_factory):
    """20 000 simulated illness-death subjects."""
    root = tmp_path_factory.mktemp("large")
    assert run_command(["simulate", "--family", "id", "--n", "20000", "--seed", "17",
                        "--out", str(root)]) == EXIT_OK
    return root / "dataset.csv"


@pytest.mark.slow
def test_compare_large_cohort_within_two_mcse(large_cohort, tmp_path):
    args = ["compare", "--data", str(large_cohort), "--workers", "4", "--out", str(tmp_path)]
    assert run_command(args) == EXIT_OK
    frame = _read(tmp_path / "compare.csv")
    assert len(frame) == 8
    assert (frame["ratio"] < 2.0).all()


@pytest.mark.slow
def test_compare_independent_chains_agree_within_mcse(large_cohort, tmp_path):
    """Independent chains: each ratio is roughly a half-normal draw."""
    config = RunConfig(
        family=ModelFamily.ILLNESS_DEATH,
        chain=ChainConfig(workers=4, seed=5),
        data_path=large_cohort,
        output_dir=tmp_path,
    )
    result = analysis_service.compare(config, id_seed_offset=1000)
    frame = _read(result.files[0])
    assert (frame["abs_diff"] > 0).all()
    assert (frame["ratio"] < 2.0).sum() >= 6
    assert result.details["max_ratio"] < 4.0
