"""Exception hierarchy shared across the package."""


class GnnReadoutError(Exception):
    """Base class for all package errors."""


class DimensionError(GnnReadoutError):
    """Shapes of operands are incompatible."""


class NumericError(GnnReadoutError):
    """An operation produced NaN or Inf from finite inputs."""


class ContractError(GnnReadoutError):
    """An API precondition was violated by the caller."""


class ConfigError(GnnReadoutError):
    """Invalid configuration value or combination."""


class FormatError(GnnReadoutError):
    """A data file does not conform to its documented format."""


class CapacityError(GnnReadoutError):
    """Input exceeds a fixed capacity (e.g. padded readout size)."""
