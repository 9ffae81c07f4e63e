"""Exception hierarchy shared by all modules."""


class LyapdecError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LyapdecError, ValueError):
    """Inputs have inconsistent shapes or violate a type invariant."""


class ResourceError(LyapdecError):
    """A configured size cap would be exceeded."""


class HypothesisViolation(LyapdecError):
    """The integrable-envelope hypothesis of the countable mode fails."""


class CertificateInconsistent(LyapdecError):
    """The dual certificate does not admit a feasible bang-bang recovery."""


class NongenericOutput(LyapdecError):
    """A perturbed field still carries a positive-measure degeneracy."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
