"""Exception hierarchy shared across the pipeline.

Each class maps to a distinct CLI exit code so shell scripts can branch on
failure class.
"""

EXIT_CONFIG = 1
EXIT_SCHEMA = 2
EXIT_TRANSPORT = 3
EXIT_QUALITY = 4
EXIT_INTERNAL = 5


class RadforgeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_INTERNAL


class ConfigError(RadforgeError):
    """Bad or missing configuration (paths, ranges, required keys)."""

    exit_code = EXIT_CONFIG


class SchemaError(RadforgeError):
    """An input file violates its documented schema or an invariant."""

    exit_code = EXIT_SCHEMA


class AgentTransportError(RadforgeError):
    """A remote agent call failed beyond the retry budget."""

    exit_code = EXIT_TRANSPORT

    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class QualityGateError(RadforgeError):
    """Pipeline-level quality check failed (e.g. tree/corpus mismatch)."""

    exit_code = EXIT_QUALITY
