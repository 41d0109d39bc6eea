"""Exception hierarchy shared by every module."""


class DeltaICMError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(DeltaICMError, ValueError):
    """Model parameters violate their invariants (non-finite, sigma below floor, ...)."""


class CapacityError(DeltaICMError, ValueError):
    """A symbol support is too wide for the requested table precision."""


class DimensionError(DeltaICMError, ValueError):
    """Array shapes that must agree do not."""


class EncodeError(DeltaICMError, ValueError):
    """A symbol cannot be encoded with the table supplied for it."""


class DecodeError(DeltaICMError, ValueError):
    """A bitstream is malformed: bad magic, unknown version, truncation."""


class FormatError(DeltaICMError, ValueError):
    """An input file (PGM, manifest) cannot be parsed."""


class OptimizationError(DeltaICMError, RuntimeError):
    """The optimizer produced a non-finite objective."""

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step
