"""Exception hierarchy shared by all modules.

The CLI maps :class:`DomainError` to exit code 2 and :class:`NumericFailure`
(including :class:`BoundaryReached`) to exit code 3.
"""


class FibxyError(Exception):
    """Base class for all package errors."""


class DomainError(FibxyError, ValueError):
    """An argument lies outside the documented domain of an operation."""


class ResourceError(FibxyError):
    """A request exceeds the dense-simulation size caps."""


class NumericFailure(FibxyError, RuntimeError):
    """A numerical routine did not converge or produced unusable output.

    ``info`` carries routine-specific context (offending index, last valid
    step, found count, ...).
    """

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class BoundaryReached(NumericFailure):
    """The wavepacket reached the right edge of the truncated chain."""
