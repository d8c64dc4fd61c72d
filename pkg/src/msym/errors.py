"""Exception hierarchy shared by every msym module."""


class MsymError(Exception):
    """Base class for all library errors."""


class CoordinateDomainError(MsymError):
    """A symbol does not belong to the coordinate system it is used with."""


class EvaluationError(MsymError):
    """An expression could not be evaluated (missing symbol, unsupported node)."""


class NumericDomainError(EvaluationError):
    """Division by zero, log of a nonpositive number and similar.

    ``subterm`` holds the offending sub-expression.
    """

    def __init__(self, message, subterm=None):
        super().__init__(message)
        self.subterm = subterm


class DomainMismatchError(MsymError):
    """Two objects live on different coordinate systems."""


class WrongSpaceError(MsymError):
    """An expression references coordinates of the wrong bundle."""


class HyperRegularityError(MsymError):
    """The Lagrangian metric is singular; use the constraint algorithm instead."""


class InternalConsistencyError(MsymError):
    """A construction failed its own independent re-check."""


class GaugeError(MsymError):
    def __init__(self, message, slots=()):
        super().__init__(message)
        self.slots = tuple(slots)


class VerificationError(MsymError):
    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


class WellPosednessError(MsymError):
    """The model is not evolvable by the explicit schemes."""


class BlowUpError(MsymError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UnsupportedLiftError(MsymError):
    pass


class UnsupportedCaseError(MsymError):
    pass


class PropagationError(MsymError):
    pass


class ModelError(MsymError):
    """Schema or content error in a model file; ``path`` is a JSON pointer."""

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path
