"""Exception hierarchy shared across the package."""


class SDSMError(Exception):
    """Base class for all package errors."""


class ConfigError(SDSMError, ValueError):
    """A run configuration failed validation."""


class DataError(SDSMError, ValueError):
    """Input data is malformed or insufficient."""


class InsufficientData(DataError):
    pass


class InvalidAllocation(SDSMError, ValueError):
    pass


class InvalidParameter(SDSMError, ValueError):
    pass


class DimensionMismatch(SDSMError, ValueError):
    pass


class NumericalError(SDSMError, ArithmeticError):
    """Base for numerical failures (exit code 4 in the CLI)."""


class NotPositiveDefinite(NumericalError):
    def __init__(self, message, *, phi=None):
        super().__init__(message)
        self.phi = phi


class SamplerFailure(NumericalError):
    """A numerical failure inside the sampler, tagged with its position in the chain."""

    def __init__(self, message, *, g, k, phi=None):
        super().__init__(f"composite iteration g={g}, inner scan k={k}: {message}")
        self.g = g
        self.k = k
        self.phi = phi


class NonStationaryTrueModel(SDSMError, ValueError):
    pass


class UnsupportedKernel(SDSMError, ValueError):
    pass


class BlockOutOfBounds(SDSMError, ValueError):
    pass


class TooFewSamples(SDSMError, ValueError):
    pass
