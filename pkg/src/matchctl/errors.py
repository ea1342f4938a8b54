"""Exception types raised by matchctl."""


class MatchCtlError(Exception):
    """Base class for all library errors."""


class DomainError(MatchCtlError, ValueError):
    """A configuration lies outside the declared validity box."""

    def __init__(self, message, q=None):
        super().__init__(message)
        self.q = q


class SingularMatrixError(MatchCtlError, ArithmeticError):
    """A metric (or other matrix that must be inverted) is singular."""

    def __init__(self, message, q=None):
        super().__init__(message)
        self.q = q


class KinematicBranchError(MatchCtlError, ArithmeticError):
    """Newton continuation for the beam angle failed or jumped branch."""


class TuningError(MatchCtlError, ValueError):
    """Tuning functions violate their preconditions (e.g. mu1' = 0)."""


class AdmissibilityError(MatchCtlError, ValueError):
    """A feedback law violates the actuation constraint P g^-1 u = 0."""


class Lemma1Error(MatchCtlError, ArithmeticError):
    """No nondegenerate symmetric solution was found.

    ``basis`` holds the computed solution-space basis for diagnosis.
    """

    def __init__(self, message, basis=None):
        super().__init__(message)
        self.basis = basis


class ConfigError(MatchCtlError, ValueError):
    """A configuration file does not match the expected schema."""
