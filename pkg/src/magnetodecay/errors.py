"""Exception hierarchy shared by the geometric engine, the solver and the CLI."""


class MagnetoDecayError(Exception):
    """Base class for all package errors."""


class ValidationError(MagnetoDecayError, ValueError):
    """Input violates a documented invariant (exit code 2 in the CLI)."""


class NumericError(MagnetoDecayError, ArithmeticError):
    """A numerical procedure failed (exit code 3 in the CLI)."""


class NoConvergence(NumericError):
    pass


class NoHit(NumericError):
    pass


class NotTangent(ValidationError):
    pass


class NotHyperbolic(ValidationError):
    pass


class ExceedsSmoothness(NumericError):
    pass


class CflViolation(ValidationError):
    pass


class LinearSolveFailure(NumericError):
    pass


class DegenerateSeries(NumericError):
    pass
