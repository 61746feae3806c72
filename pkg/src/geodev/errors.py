"""Exception hierarchy shared by all geodev modules."""


class GeodevError(Exception):
    """Base class for every error raised by geodev."""


class DomainEscape(GeodevError):
    """A point left the validity domain of a chart."""


class SingularMetric(GeodevError):
    pass


class UnknownGeometry(GeodevError):
    pass


class NonFiniteState(GeodevError):
    """An integrator stage produced NaN or Inf."""


class StepUnderflow(GeodevError):
    """Adaptive step size collapsed, usually a sign of finite-time blow-up."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class GridMismatch(GeodevError):
    pass


class SingularJacobian(GeodevError):
    pass


class HessianNotZero(GeodevError):
    pass


class DegenerateFrame(GeodevError):
    pass


class InjectivityFailure(GeodevError):
    pass


# Raised by the same radius search; kept as an alias for readability at call sites.
DegenerateGeometry = InjectivityFailure


class InsufficientOverlap(GeodevError):
    pass


class NotGraphLike(GeodevError):
    pass


class NonOrthonormalInput(GeodevError):
    pass


class ConfigError(GeodevError):
    pass


class InversionFailure(GeodevError):
    """Newton inversion of a chart map did not converge."""
