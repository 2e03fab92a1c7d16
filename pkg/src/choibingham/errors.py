"""Exception hierarchy."""


class ChoiBinghamError(Exception):
    """Base class for all library errors."""


class ConfigError(ChoiBinghamError, ValueError):
    """Invalid user-supplied configuration or input file."""


class NumericError(ChoiBinghamError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class DimensionError(ChoiBinghamError, ValueError):
    pass


class NotCPError(NumericError):
    """Choi matrix has an eigenvalue below -psd_tol."""


class NotTPError(NumericError):
    """Partial trace over the output factor differs from the identity."""


class RankDeficiencyError(NumericError):
    """Requested Kraus rank discards eigenvalue mass above rank_tol."""


class ConditioningError(NumericError):
    """Natural parameter too large for the sampler to be reliable."""


class StepTooLargeError(NumericError):
    """Cayley system is numerically singular for the requested step."""


class LineSearchError(NumericError):
    """Line search exhausted its shrink budget without an acceptable step."""


class DegenerateStiefelError(NumericError):
    """Other columns lost rank while building the orthogonal complement."""


class NumericDegeneracyError(NumericError):
    """Posterior underflowed to zero everywhere on the grid."""
