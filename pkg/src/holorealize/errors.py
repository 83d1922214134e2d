"""Exception and warning types raised across the package."""


class HoloRealizeError(Exception):
    """Base class for all package errors."""


class StructuralError(HoloRealizeError, ValueError):
    """Operands have incompatible shapes (variable count, order, dimension)."""


class PreconditionError(HoloRealizeError, ValueError):
    pass


class NonNegativeSpectrum(PreconditionError):
    pass


class IllConditioned(HoloRealizeError):
    pass


class LinearPartMismatch(PreconditionError):
    pass


class NonNilpotent(HoloRealizeError):
    pass


class NonUnipotent(HoloRealizeError):
    pass


class XNotFixed(PreconditionError):
    pass


class NotNormalized(PreconditionError):
    pass


class ZeroDivisor(HoloRealizeError):
    """A targeted monomial is resonant and cannot be removed."""

    def __init__(self, message, monomials=()):
        super().__init__(message)
        self.monomials = list(monomials)


class NegativeResonancePresent(HoloRealizeError):
    def __init__(self, message, obstructions=()):
        super().__init__(message)
        self.obstructions = list(obstructions)


class Obstructed(NegativeResonancePresent):
    """The input has a formal normal form with negative resonances."""


class NonIntegerExponent(HoloRealizeError):
    pass


class StepUnderflow(HoloRealizeError):
    pass


class NonFiniteCoefficient(HoloRealizeError):
    pass


class LeftDomain(HoloRealizeError):
    def __init__(self, message, escape_time=None):
        super().__init__(message)
        self.escape_time = escape_time


class InsufficientSamples(HoloRealizeError):
    pass


class BorderlineInteger(UserWarning):
    """A resonance value sits just outside the integer tolerance."""


class SmallDivisor(UserWarning):
    pass
