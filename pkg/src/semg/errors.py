"""Exception hierarchy shared by every subsystem.

Each error class maps to one process exit code so the command line tool can
fail with a stable, scriptable status.  Library code raises these directly;
nothing else in the package raises bare ValueError for contract problems.
"""

__all__ = [
    "SemgError",
    "ConfigurationError",
    "ContractViolation",
    "MissingArtifactError",
    "CheckpointError",
    "NumericError",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_MISSING_ARTIFACT",
    "EXIT_NUMERIC",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_NUMERIC = 4


class SemgError(Exception):
    """Base class; carries the exit code used by the CLI."""

    exit_code = 1


class ConfigurationError(SemgError):
    """Bad config file, unknown key, value out of range, malformed override."""

    exit_code = EXIT_CONFIG


class ContractViolation(SemgError):
    """A function was called in a way its interface forbids.

    Examples: mismatched array shapes, a timestep outside the schedule,
    a backward pass fed a cache built from different parameters.
    """

    exit_code = EXIT_CONFIG


class MissingArtifactError(SemgError):
    """A required input file (checkpoint, config) does not exist."""

    exit_code = EXIT_MISSING_ARTIFACT


class CheckpointError(SemgError):
    """A checkpoint exists but cannot be loaded: wrong magic, truncated
    payload, or a parameter manifest that disagrees with the caller."""

    exit_code = EXIT_MISSING_ARTIFACT


class NumericError(SemgError):
    """Non-finite loss, undefined metric, or any runtime numeric failure."""

    exit_code = EXIT_NUMERIC
