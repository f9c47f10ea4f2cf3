"""Exception hierarchy shared by every qose module."""

import numpy as np


class QoseError(Exception):
    """Base class for all errors raised by qose."""


class DimensionMismatch(QoseError, ValueError):
    pass


class NonFiniteValue(QoseError, ValueError):
    pass


class NonHermitianInput(QoseError, ValueError):
    pass


class NotPSD(QoseError, ValueError):
    pass


class ZeroNorm(QoseError, ValueError):
    pass


class SingularSystem(QoseError, np.linalg.LinAlgError):
    pass


class SingularInnovationCovariance(SingularSystem):
    pass


class NotNormalized(QoseError, ValueError):
    pass


class ZeroProbabilityBranch(QoseError, ValueError):
    pass


class IncompleteMeasurement(QoseError, ValueError):
    """Measurement operators violate sum_m M_m^dag M_m = I."""


class NonUnitary(QoseError, ValueError):
    pass


class BadConfig(QoseError, ValueError):
    pass


class ZeroVector(QoseError, ValueError):
    pass


class InsufficientRuns(QoseError, ValueError):
    pass


class RankDeficient(QoseError, np.linalg.LinAlgError):
    pass


class ConfigParseError(QoseError, ValueError):
    """The config document is not well-formed."""


class ConfigValidationError(QoseError, ValueError):
    """The config document is well-formed but semantically invalid.

    Attributes:
        field: dotted path of the first offending field.
    """

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
