"""Error taxonomy surfaced through the CLI exit codes.

ConfigError -> exit 2, DataError -> exit 3, NumericError -> exit 4.
Tensor-level ShapeError/DomainError live in bct.tensor; they indicate
programming errors rather than bad user input and are not caught by the CLI.
"""


class ConfigError(ValueError):
    """Invalid or contradictory configuration (unknown key, bad value, ...)."""


class DataError(ValueError):
    """Dataset problems: missing directories, corrupt image files, bad splits."""


class NumericError(RuntimeError):
    """Training diverged: non-finite loss or parameter values."""
