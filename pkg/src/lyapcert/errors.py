"""Exception hierarchy shared by all modules."""


class LyapcertError(Exception):
    """Base class for toolkit errors."""


class DomainError(LyapcertError, ValueError):
    """Argument outside the domain of a function (e.g. negative level)."""


class RangeError(LyapcertError, ValueError):
    """Requested value lies outside the range of a gauge or trajectory."""


class PreconditionError(LyapcertError, ValueError):
    """A sampled precondition of a construction does not hold."""


class ConstructionError(LyapcertError):
    """A derived object (KL bound, dwell map, ...) cannot be built."""


class ConfigurationError(LyapcertError, ValueError):
    """Inconsistent or malformed user configuration."""


class ConstraintError(ConfigurationError):
    """A named parameter constraint is violated.

    ``constraint`` carries the identifier of the violated inequality.
    """

    def __init__(self, constraint, message):
        super().__init__(f"[{constraint}] {message}")
        self.constraint = constraint


class QuadratureError(LyapcertError):
    """Integrand singular on the integration interval."""


class DivergenceError(LyapcertError):
    """Integrator step size underflow or state blow-up.

    The last accepted state and time are kept for diagnostics.
    """

    def __init__(self, message, t_last, x_last):
        super().__init__(message)
        self.t_last = t_last
        self.x_last = x_last
