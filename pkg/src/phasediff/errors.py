"""Exception hierarchy.

Validation problems derive from :class:`ValueError`; numerical failures that a
caller may want to treat differently (the CLI maps them to exit code 2) derive
from :class:`NumericalError`.
"""


class NumericalError(ArithmeticError):
    """Base class for failures of a numerical procedure."""


class NonHermitianError(ValueError):
    pass


class IndefiniteMatrixError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


class InvalidPovmError(ValueError):
    pass


class OutOfRangeError(ValueError):
    pass


class NonOrthonormalBasisError(ValueError):
    pass


class NonUnitaryCoinError(ValueError):
    pass


class WalkRangeError(ValueError):
    """Amplitude would be translated past the declared position range."""


class EmptyCountsError(ValueError):
    pass


class SingularQfimError(NumericalError):
    pass


class DegenerateOutcomeError(NumericalError):
    """An outcome has vanishing probability but non-vanishing derivative."""


class ComplexBetaError(NumericalError):
    pass


class SingularCovarianceError(NumericalError):
    pass


class NoImprovementError(NumericalError):
    pass
