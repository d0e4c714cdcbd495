"""Exception hierarchy shared across the package."""


class SemcertError(Exception):
    """Base class for all package-specific errors."""


class FormatError(SemcertError):
    """A file does not follow its declared binary/text format."""


class ConsistencyError(SemcertError):
    """Mutually inconsistent inputs (e.g. image/label counts differ)."""


class DomainError(SemcertError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DecompositionError(SemcertError):
    """A matrix factorization failed (matrix not SPD, singular, ...)."""


class UnsupportedCompositionError(SemcertError):
    """No closed-form resolving function is registered for a transform chain."""


class DegenerateTransformError(SemcertError):
    """The score profile carries no signal; bounds cannot be normalized."""


class ContractViolationError(SemcertError):
    """A pluggable component broke its interface contract."""


class MissingArtifactError(SemcertError):
    """A required precomputed artifact (bound table, weights) is absent."""


class ConfigError(SemcertError):
    """Invalid or incomplete run configuration."""


class TrainingError(SemcertError):
    """Optimization diverged (NaN loss or weights)."""
