"""Exception hierarchy shared by all ssblab modules."""


class SsblabError(Exception):
    """Base class for library errors."""


class DomainError(SsblabError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(SsblabError, ValueError):
    """A scenario, campaign or analytics configuration is invalid."""


class WindowRangeError(SsblabError, IndexError):
    """A correlation window does not fit inside the sample vector."""


class DegenerateModelError(SsblabError, ValueError):
    """The observation model is rank deficient.

    Attributes:
        columns: labels of the columns found to be linearly dependent.
    """

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class UndefinedEstimateError(SsblabError, ArithmeticError):
    """An estimator was asked for a quantity it cannot define (zero weights, r0 = 0)."""


class NoDetectionError(SsblabError):
    """No synchronization signal could be detected."""


class WaveformIOError(SsblabError, OSError):
    """A waveform or sidecar file is missing, empty or malformed."""
