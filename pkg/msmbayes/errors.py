# msmbayes/errors.py
"""
Exception hierarchy shared by every module.

Each exception carries the process exit code the CLI reports for it, so the
command dispatcher can map failures to exit codes in one place.
"""
from typing import List, Optional, TYPE_CHECKING

if TYPE_CHECKING:
    from msmbayes.schemas import RecordViolation


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64


class MsmBayesError(Exception):
    """Base class for all errors raised by msmbayes."""
    exit_code: int = EXIT_VALIDATION


# ============================================================================
# VALIDATION FAILURES (exit 1)
# ============================================================================

class ValidationFailure(MsmBayesError, ValueError):
    """Input data, parameters or configuration violate a domain rule."""
    exit_code = EXIT_VALIDATION


class DatasetValidationError(ValidationFailure):
    """
    One or more subject records are invalid.

    Attributes:
        violations: every offending record with the rule it breaks
    """

    def __init__(self, violations: List["RecordViolation"], message: Optional[str] = None):
        self.violations = list(violations)
        if message is None:
            shown = "; ".join(v.describe() for v in self.violations[:5])
            more = len(self.violations) - 5
            suffix = f" (and {more} more)" if more > 0 else ""
            message = f"{len(self.violations)} invalid record(s): {shown}{suffix}"
        super().__init__(message)


class DatasetFormatError(ValidationFailure):
    """A dataset file is structurally unreadable (missing columns, bad header)."""


class ConfigError(ValidationFailure):
    """Run configuration is inconsistent or malformed."""


class ModelFamilyMismatch(ValidationFailure):
    """Parameters, draws or a requested functional belong to another model family."""


# ============================================================================
# NUMERICAL FAILURES (exit 2)
# ============================================================================

class NumericalFailure(MsmBayesError, ArithmeticError):
    """A computation could not produce a trustworthy finite result."""
    exit_code = EXIT_NUMERICAL


class QuadratureError(NumericalFailure):
    """Composite quadrature did not meet its tolerance after refinement."""


class DivergentTargetError(NumericalFailure):
    """The log-posterior stayed non-finite around the initial point."""


# ============================================================================
# USAGE (exit 64)
# ============================================================================

class UsageError(MsmBayesError):
    """Unknown subcommand or malformed command-line flags."""
    exit_code = EXIT_USAGE


# ============================================================================
# OUTPUT
# ============================================================================

class ReportWriteError(MsmBayesError):
    """A report or data file could not be written."""
    exit_code = EXIT_VALIDATION
