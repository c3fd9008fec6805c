"""Exception hierarchy shared by every module."""


class PoisonLabError(Exception):
    """Base class for all library errors."""


class InvalidShape(PoisonLabError, ValueError):
    pass


class NonFiniteInput(PoisonLabError, ValueError):
    pass


class SingularMatrix(PoisonLabError, ArithmeticError):
    """A pivot fell below the relative singularity threshold."""


class NumericallySingular(PoisonLabError, ArithmeticError):
    """Smallest singular value (or pivot) is below 1e-13 relative."""


class NoConvergence(PoisonLabError, ArithmeticError):
    pass


class ZeroDiagonal(PoisonLabError, ArithmeticError):
    pass


class ZeroPivot(PoisonLabError, ArithmeticError):
    pass


class CgBreakdown(PoisonLabError, ArithmeticError):
    pass


class DegenerateSpectrum(PoisonLabError, ArithmeticError):
    pass


class InnerSolveFailure(PoisonLabError, ArithmeticError):
    pass


class PreconditionFailed(PoisonLabError, ValueError):
    pass


class InvalidAlpha(PoisonLabError, ValueError):
    pass


class NotSymmetric(PoisonLabError, ValueError):
    pass


class DefectiveMatrix(PoisonLabError, ArithmeticError):
    pass


class TooFewSamples(PoisonLabError, ValueError):
    pass


class ZeroVariance(PoisonLabError, ArithmeticError):
    pass


class InvalidConfig(PoisonLabError, ValueError):
    pass
