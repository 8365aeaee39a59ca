"""Exception types shared across the package."""


class CclabError(Exception):
    """Base class for all library errors."""


class DimensionError(CclabError, ValueError):
    """Alphabet sizes or array shapes do not line up."""


class InvalidDistributionError(CclabError, ValueError):
    """A vector or kernel row is not a probability distribution."""


class ParameterError(CclabError, ValueError):
    """A model parameter is outside its admissible range."""


class EnumerationCapError(CclabError):
    """Exact enumeration would exceed the configured atom budget."""

    def __init__(self, message, horizon=None, count=None, cap=None):
        super().__init__(message)
        self.horizon = horizon
        self.count = count
        self.cap = cap


class InfeasibleBudgetError(CclabError, ValueError):
    """No input distribution meets the cost budget."""


class ConvergenceError(CclabError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class ImpossibleObservationError(CclabError, ValueError):
    """Conditioning on an observation of predictive probability zero."""


class TruncationError(CclabError, ValueError):
    """Tail mass beyond a truncation level is too large."""


class PremiseError(CclabError):
    """A structural premise of a check does not hold (for example i.i.d. outputs)."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class PreconditionError(CclabError, ValueError):
    """An operation was called outside its domain (for example a non-injective decoder)."""


class ConsistencyError(CclabError, RuntimeError):
    """Two independent computations of the same quantity disagree."""


class ConfigError(CclabError, ValueError):
    """An experiment configuration is malformed."""
