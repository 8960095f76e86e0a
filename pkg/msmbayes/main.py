# msmbayes/main.py
"""
Command-line entry point.

    msmbayes simulate  --family id --n 1000 --seed 7 --out runs/sim
    msmbayes fit       --family id --data runs/sim/dataset.csv --out runs/fit
    msmbayes predict   --draws runs/fit/draws.csv --profiles "w:70,m:90" --out runs/pred
    msmbayes decompose --draws runs/fit/draws.csv --out runs/pred
    msmbayes compare   --data runs/sim/dataset.csv --out runs/compare

Every subcommand also reads ``--config FILE`` (flat key=value, keys named
like the long flags with underscores); flags win over the file.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 64 usage.
"""
import argparse
import sys
import uuid
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from msmbayes.csvio import read_draws_csv
from msmbayes.errors import EXIT_OK, ConfigError, MsmBayesError, UsageError
from msmbayes.logger import bind_context, clear_context, get_logger, setup_logging
from msmbayes.reference import reference_parameters
from msmbayes.schemas import (
    DEFAULT_PROFILES,
    ChainConfig,
    ModelFamily,
    QuadratureConfig,
    RunConfig,
    SimulationSpec,
    TimeGrid,
)
from msmbayes.services import CommandResult, analysis_service
from msmbayes.settings import load_run_config_file
from msmbayes.utils import parse_age_center, parse_profiles

logger = get_logger(__name__)

COMMANDS = ("simulate", "fit", "predict", "decompose", "compare")


class CommandLineParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(f"{message}\n{self.format_usage()}")


# ============================================================================
# PARSER
# ============================================================================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value run configuration file")
    parser.add_argument("--family", choices=[f.value for f in ModelFamily])
    parser.add_argument("--seed", type=int, help="64-bit seed")
    parser.add_argument("--out", help="output directory (default .)")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ERROR")


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="dataset CSV")
    parser.add_argument("--age-center", dest="age_center", help="years, or 'auto' for the dataset mean")
    parser.add_argument("--n", type=int, help="simulate this many subjects instead of reading --data")
    parser.add_argument("--horizon", type=float, help="end of study in years after entry (default 8)")
    parser.add_argument("--accrual", type=float, help="uniform entry over this many years")


def _add_chain(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--chains", type=int)
    parser.add_argument("--iters", type=int)
    parser.add_argument("--burnin", type=int)
    parser.add_argument("--thin", type=int)
    parser.add_argument("--workers", type=int, help="threads running chains")


def _add_outcomes(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--draws", help="draws CSV written by fit")
    parser.add_argument("--profiles", help='e.g. "w:70,w:80,w:90,m:70,m:80,m:90"')
    parser.add_argument("--nodes", type=int, help="Gauss-Legendre nodes per panel (default 64)")
    parser.add_argument("--grid-max", dest="grid_max", type=float, help="curve end in years (default 5)")
    parser.add_argument("--grid-step", dest="grid_step", type=float, help="curve step in years (default 0.25)")
    parser.add_argument("--max-draws", dest="max_draws", type=int, help="draws used for curves (0 = all)")


def build_parser() -> CommandLineParser:
    parser = CommandLineParser(prog="msmbayes", description="Bayesian multi-state models for refracture data")
    sub = parser.add_subparsers(dest="command", parser_class=CommandLineParser)

    simulate = sub.add_parser("simulate", help="simulate a cohort at the reference parameters")
    _add_common(simulate)
    _add_data(simulate)

    fit = sub.add_parser("fit", help="sample the posterior and summarize it")
    _add_common(fit)
    _add_data(fit)
    _add_chain(fit)

    predict = sub.add_parser("predict", help="incidence table and probability curves from draws")
    _add_common(predict)
    _add_outcomes(predict)
    predict.add_argument("--table-draws", dest="table_draws", type=int,
                         help="draws used for the incidence table (default all)")

    decompose = sub.add_parser("decompose", help="refracture CIF split into alive and dead")
    _add_common(decompose)
    _add_outcomes(decompose)

    compare = sub.add_parser("compare", help="fit both families and compare shared parameters")
    _add_common(compare)
    _add_data(compare)
    _add_chain(compare)
    compare.add_argument("--id-seed-offset", dest="id_seed_offset", type=int,
                         help="seed offset of the illness-death fit (default 0: shared substreams)")
    return parser


# ============================================================================
# OPTIONS
# ============================================================================

class Options:
    """Flags merged over config-file values; typed on access."""

    def __init__(self, flags: Dict[str, Any], file_values: Dict[str, str]):
        self.values: Dict[str, Any] = dict(file_values)
        self.values.update({k: v for k, v in flags.items() if v is not None})

    def get(self, key: str, cast: Callable[[Any], Any] = str, default: Any = None) -> Any:
        value = self.values.get(key)
        if value is None:
            return default
        try:
            return cast(value)
        except (TypeError, ValueError):
            raise ConfigError(f"Bad value for {key}: {value!r}")

    def has(self, key: str) -> bool:
        return self.values.get(key) is not None


def _family(opts: Options) -> ModelFamily:
    return opts.get("family", ModelFamily, ModelFamily.ILLNESS_DEATH)


def _simulation(opts: Options, family: ModelFamily) -> SimulationSpec:
    return SimulationSpec(
        family=family,
        true_params=reference_parameters(family),
        n_subjects=opts.get("n", int, 1000),
        horizon=opts.get("horizon", float, 8.0),
        accrual_years=opts.get("accrual", float),
        age_center=parse_age_center(opts.get("age_center")),
        seed=opts.get("seed", int, 2024),
    )


def _chain(opts: Options) -> ChainConfig:
    defaults = ChainConfig()
    return ChainConfig(
        n_chains=opts.get("chains", int, defaults.n_chains),
        n_iterations=opts.get("iters", int, defaults.n_iterations),
        n_burnin=opts.get("burnin", int, defaults.n_burnin),
        thin=opts.get("thin", int, defaults.thin),
        seed=opts.get("seed", int, defaults.seed),
        workers=opts.get("workers", int, defaults.workers),
    )


def _run_config(opts: Options) -> RunConfig:
    family = _family(opts)
    if opts.has("data") and opts.has("n"):
        raise ConfigError("Give either --data or --n, not both")
    if not opts.has("data") and not opts.has("n"):
        raise ConfigError("Give --data PATH, or --n N to fit a simulated cohort")
    age_center = parse_age_center(opts.get("age_center"))
    return RunConfig(
        family=family,
        chain=_chain(opts),
        output_dir=Path(opts.get("out", str, ".")),
        data_path=opts.get("data", Path),
        simulation=None if opts.has("data") else _simulation(opts, family),
        age_center=age_center,
    )


def _outcome_inputs(opts: Options):
    if not opts.has("draws"):
        raise ConfigError("--draws PATH is required")
    draws = read_draws_csv(opts.get("draws", Path))
    profiles = parse_profiles(opts.get("profiles")) if opts.has("profiles") else DEFAULT_PROFILES
    quadrature = QuadratureConfig(nodes=opts.get("nodes", int, 64))
    grid = TimeGrid.regular(opts.get("grid_max", float, 5.0), opts.get("grid_step", float, 0.25))
    max_draws = opts.get("max_draws", int, 1000) or None
    return draws, profiles, quadrature, grid, max_draws


# ============================================================================
# DISPATCH
# ============================================================================

def _dispatch(command: str, opts: Options) -> CommandResult:
    if command == "simulate":
        return analysis_service.simulate(_simulation(opts, _family(opts)), Path(opts.get("out", str, ".")))
    if command == "fit":
        return analysis_service.fit(_run_config(opts))
    if command == "compare":
        return analysis_service.compare(_run_config(opts), opts.get("id_seed_offset", int, 0))
    draws, profiles, quadrature, grid, max_draws = _outcome_inputs(opts)
    outdir = Path(opts.get("out", str, "."))
    if command == "predict":
        table_draws = opts.get("table_draws", int, 0) or None
        return analysis_service.predict(draws, profiles, outdir, quadrature, grid, max_draws, table_draws)
    return analysis_service.decompose(draws, profiles, outdir, quadrature, grid, max_draws)


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand and return its exit code.

    Errors are logged as ``command_failed`` and summarized on stderr.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    command = "msmbayes"
    setup_logging()
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        if args.command is None:
            raise UsageError(f"a subcommand is required: {', '.join(COMMANDS)}")
        command = args.command

        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        file_values = load_run_config_file(args.config) if args.config else {}
        opts = Options(flags, file_values)
        if opts.has("log_level"):
            setup_logging(opts.get("log_level"))
        bind_context(command=command, run_id=uuid.uuid4().hex[:12])

        result = _dispatch(command, opts)
        logger.info("command_completed", files=[str(p) for p in result.files], **result.details)
        for path in result.files:
            print(path)
        return EXIT_OK

    except ValidationError as exc:
        return _fail(command, ConfigError(_describe_validation(exc)))
    except MsmBayesError as exc:
        return _fail(command, exc)
    except ValueError as exc:
        return _fail(command, ConfigError(str(exc)))
    finally:
        clear_context()


def _describe_validation(exc: ValidationError) -> str:
    parts: List[str] = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or exc.title
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def _fail(command: str, exc: MsmBayesError) -> int:
    logger.error("command_failed", error=type(exc).__name__, message=str(exc), exit_code=exc.exit_code)
    print(f"msmbayes {command}: error: {exc}", file=sys.stderr)
    return exc.exit_code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
