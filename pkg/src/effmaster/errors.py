"""Exception hierarchy."""


class EffmasterError(Exception):
    """Base class for all engine errors."""


class DimensionError(EffmasterError, ValueError):
    """Invalid dimension, cutoff, or mismatched operator shapes."""


class FactorTypeError(EffmasterError, TypeError):
    """An operation was requested on the wrong kind of tensor factor."""


class AlgebraError(EffmasterError):
    """A candidate triple does not realize a polynomial deformation of su(2)."""


class ExtractionError(AlgebraError):
    """Structure-polynomial fit failed on some block."""

    def __init__(self, message, n_value=None, residual=None):
        super().__init__(message)
        self.n_value = n_value
        self.residual = residual


class CommutationError(EffmasterError):
    """Operator does not commute with the integral of motion."""

    def __init__(self, message, norm):
        super().__init__(message)
        self.norm = norm


class NonUnitaryError(EffmasterError):
    pass


class DegenerateDetuningError(EffmasterError, ValueError):
    """Detuning is zero, the dispersive expansion is undefined."""


class InvariantViolation(EffmasterError):
    """A density-matrix invariant failed; carries the time stamp and residual."""

    def __init__(self, message, time=None, residual=None):
        super().__init__(message)
        self.time = time
        self.residual = residual


class StabilityError(EffmasterError):
    """Fixed step is too large for the generator norm."""

    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class DimensionGuardError(EffmasterError):
    """Superoperator would exceed the configured size guard."""


class ConfigError(EffmasterError, ValueError):
    pass
