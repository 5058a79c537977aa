"""Error types shared across the toolkit.

Each error class carries the CLI exit code used when it escapes a
subcommand, so library callers and the CLI agree on failure semantics.
"""


class ChargecastError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 4


class ConfigurationError(ChargecastError):
    """Invalid configuration: bad config file, missing column, bad parameter."""

    exit_code = 2


class DataError(ChargecastError):
    """Invalid or insufficient input data."""

    exit_code = 3


class SolverError(ChargecastError):
    """Optimization failed or produced an infeasible plan."""

    exit_code = 4
