"""Exception types shared across the package."""


class DeadCoreError(Exception):
    """Base class for errors raised by this package."""


class NumericalFailure(DeadCoreError):
    """A solver or iteration failed to converge within its budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CalibrationFailure(DeadCoreError):
    """An analytic comparison function could not be calibrated."""


class DegenerateProfileError(DeadCoreError):
    """A profile is unusable for the requested operation (e.g. all dead)."""


class CertificateOverflowError(DeadCoreError):
    """The iterated-exponential drift bound is not representable in floats."""

    def __init__(self, message, max_representable):
        super().__init__(message)
        self.max_representable = max_representable
