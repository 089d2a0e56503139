"""Exception hierarchy shared by every module of the package."""


class NlccaError(Exception):
    """Base class for all errors raised by :mod:`nlcca`."""


class InvalidDimension(NlccaError, ValueError):
    pass


class InvalidCorrelation(NlccaError, ValueError):
    pass


class UnrealizableCorrelation(NlccaError, ValueError):
    pass


class InvalidShape(NlccaError, ValueError):
    pass


class InsufficientSamples(NlccaError, ValueError):
    pass


class NonFiniteInput(NlccaError, ValueError):
    pass


class IllConditioned(NlccaError, ArithmeticError):
    pass


class InsufficientBatch(NlccaError, ValueError):
    pass


class CacheMismatch(NlccaError, RuntimeError):
    pass


class DivergedTraining(NlccaError, RuntimeError):
    pass


class DegenerateTarget(NlccaError, ValueError):
    pass


class RankDeficientSpan(NlccaError, ArithmeticError):
    pass


class DominanceViolated(NlccaError, ValueError):
    pass


class WrongExperiment(NlccaError, ValueError):
    pass


class ConfigError(NlccaError, ValueError):
    pass


class NonUniqueSubgradient(UserWarning):
    """Warned (not raised) when tied singular values make the gradient a subgradient."""


class ReportError(NlccaError, OSError):
    """Report files could not be written, read, or failed their consistency check."""
