"""Shared exception types, mapped to CLI exit codes."""


class ConfigError(Exception):
    """Bad or missing run configuration (exit code 2)."""


class DataError(Exception):
    """Malformed or inconsistent input data (exit code 3)."""


class NumericalError(Exception):
    """Numerical failure: singular system, non-PD matrix, divergence (exit code 4)."""
