"""Exception hierarchy shared by all modules.

Each class maps to one CLI exit code so failures stay machine-parsable.
"""


class BinganError(Exception):
    """Base class; `exit_code` and `prefix` drive the CLI error line."""

    exit_code = 1
    prefix = "error"


class ConfigError(BinganError):
    """Bad hyperparameter, unknown config key, unsupported variant."""

    exit_code = 2
    prefix = "config-error"


class DimensionError(BinganError):
    """Tensor/layer shape mismatch."""

    exit_code = 3
    prefix = "dimension-error"


class DataError(BinganError):
    """Invalid data values (NaN input, label mismatch, ...)."""

    exit_code = 3
    prefix = "data-error"


class FormatError(BinganError):
    """Corrupt or truncated container file."""

    exit_code = 3
    prefix = "format-error"


class ContractError(BinganError):
    """Caller violated an operation precondition."""

    exit_code = 3
    prefix = "contract-error"


class NumericalError(BinganError):
    """Non-finite loss or gradient during training."""

    exit_code = 4
    prefix = "numerical-error"
