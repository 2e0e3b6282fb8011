"""Exception taxonomy shared across the package.

Config problems (bad field values, unknown variants, missing files) raise
ConfigError.  Violations of runtime contracts (shape mismatches, values
outside a documented domain, mode misuse, train/eval split contamination)
raise ContractError or one of its subclasses.  The command line maps
ConfigError to exit code 2 and ContractError to exit code 3.
"""


class ConfigError(Exception):
    """A configuration value or file is invalid."""


class ContractError(Exception):
    """An API contract was violated by the caller or by corrupt data."""


class DimensionError(ContractError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ContractError):
    """A numeric argument lies outside its documented domain."""


class ModeError(ContractError):
    """An operation was invoked on a model in the wrong mode."""


class FormatError(ContractError):
    """A serialized file does not match its declared layout."""


class ContaminationError(ContractError):
    """An evaluation dataset overlaps the training split."""


class InsufficientDataError(ContractError):
    """Too few samples to compute the requested statistic."""
