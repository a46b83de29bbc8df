"""Exception types shared across the package."""


class CIEnergyError(Exception):
    """Base class for all errors raised by this package."""


# --- polynomial / input parsing ---

class MalformedLine(CIEnergyError):
    pass


class MixedDegree(CIEnergyError):
    pass


class EmptyPolynomial(CIEnergyError):
    pass


class DimensionMismatch(CIEnergyError):
    pass


class InvalidDimensions(CIEnergyError):
    pass


class LengthMismatch(CIEnergyError):
    pass


class ZeroVector(CIEnergyError):
    pass


class SingularMatrix(CIEnergyError):
    pass


class NotEigenvector(CIEnergyError):
    """A polynomial is not an eigenvector of the diagonal field.

    Carries the two offending monomials and their weights when known.
    """

    def __init__(self, message, monomials=None):
        super().__init__(message)
        self.monomials = monomials


# --- numerical geometry ---

class FrameSearchExhausted(CIEnergyError):
    pass


class PathFailure(CIEnergyError):
    pass


class DegreeDeficit(CIEnergyError):
    pass


class TooManyRejections(CIEnergyError):
    pass


class BranchJump(CIEnergyError):
    pass


class StencilIllConditioned(CIEnergyError):
    pass


class NonPositiveDensity(CIEnergyError):
    pass


class ZeroGradientOnVariety(CIEnergyError):
    pass


class ExactZero(CIEnergyError):
    pass


# --- functionals / norms ---

class NonFano(CIEnergyError):
    pass


class NotSpecialLinear(CIEnergyError):
    pass


class CalibrationAmbiguous(CIEnergyError):
    pass


class CalibrationFailed(CIEnergyError):
    pass


class MissingCalibration(CIEnergyError):
    pass
