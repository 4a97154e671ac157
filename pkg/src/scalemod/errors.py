"""Exception hierarchy shared by all modules."""


class ModulationError(Exception):
    """Base class for every error raised by scalemod."""


class EvaluationError(ModulationError):
    """A density, mean or scale evaluated to a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message if point is None else f"{message} at {point}")
        self.point = point


class DivergentPartial(ModulationError):
    """A scale partial used as a divisor is (numerically) zero."""

    def __init__(self, which, point=None):
        super().__init__(f"|f'_{which}| < 1e-12 at {point}")
        self.which = which
        self.point = point


class NonFiniteIntegrand(ModulationError):
    def __init__(self, theta):
        super().__init__(f"integrand is not finite at node {theta!r}")
        self.theta = theta


class NoConvergence(ModulationError):
    pass


class ZeroMass(ModulationError):
    """The posterior weight over a subset underflows at the given criteria."""

    def __init__(self, omega, x, y):
        super().__init__(f"no posterior mass on {omega} at (x, y) = ({x}, {y})")
        self.omega = omega
        self.x = x
        self.y = y


class MeanShapeError(ModulationError):
    pass


class LevelSetExhausted(ModulationError):
    pass


class InsufficientCoverage(ModulationError):
    pass


class TabulationError(ModulationError):
    pass


class SchemaError(ModulationError):
    """Invalid scenario document; ``path`` locates the offending key."""

    def __init__(self, message, path=""):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
