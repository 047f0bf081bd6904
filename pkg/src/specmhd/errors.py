"""Exception types raised across the package."""


class SpecMHDError(Exception):
    """Base class for all package errors."""


class PreconditionError(SpecMHDError, ValueError):
    """An operation was called outside its domain of validity."""


class GridMismatchError(PreconditionError):
    """Fields living on different grids were combined."""


class DealiasingError(PreconditionError):
    """A product was requested for fields not supported inside the cutoff ball."""


class SingularMultiplierError(PreconditionError):
    """A negative-order homogeneous multiplier hit a nonzero mean."""


class DegenerateProbeError(PreconditionError):
    """An estimate probe has a vanishing denominator."""


class ConfigError(SpecMHDError, ValueError):
    """A run configuration failed validation."""


class BlowUpError(SpecMHDError, FloatingPointError):
    """Non-finite values appeared during time integration."""
