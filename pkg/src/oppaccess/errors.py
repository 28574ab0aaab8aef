"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
ModelError and SolverError -> 4. Plain ValueError marks a violated call
contract (bad argument) and is treated like a config error at the CLI.
"""


class OppaccessError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(OppaccessError):
    """Malformed or inconsistent experiment configuration."""


class DataError(OppaccessError):
    """Unusable input data (bad samples, missing trace labels, ...)."""


class ModelError(OppaccessError):
    """Invalid traffic model or strategy/model incompatibility."""


class SolverError(OppaccessError):
    """Root finding failed or the requested root is out of reach."""
