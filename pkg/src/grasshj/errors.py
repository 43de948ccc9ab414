"""Exception hierarchy shared by all grasshj modules."""


class GrassHJError(Exception):
    """Base class for every error raised by this package."""


# -- Grassmann algebra ------------------------------------------------------

class DimensionError(GrassHJError, ValueError):
    """Operands live in algebras with different numbers of generators."""


class PairingError(GrassHJError, ValueError):
    """Conjugation requested on an algebra whose generators cannot be paired."""


class ParityError(GrassHJError, ValueError):
    """An element has the wrong Grassmann parity for the requested operation."""


# -- expressions ------------------------------------------------------------

class ExprSyntaxError(GrassHJError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class UnboundConstantError(GrassHJError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"constant {self.name!r} is not bound"


# -- numerics ---------------------------------------------------------------

class DomainError(GrassHJError, ArithmeticError):
    """A value was requested outside the region where it is defined.

    ``x`` carries the offending abscissa when one is known.
    """

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class ExprDomainError(DomainError):
    """Expression evaluated outside its domain (sqrt of a negative, 1/0, overflow)."""


class TurningPointError(DomainError):
    """2E - V(x)^2 fell below the guard, i.e. the motion reached a turning point."""


class WindowExceededError(TurningPointError):
    """The requested time lies beyond the monotone branch of the body trajectory."""


class QuadratureError(GrassHJError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""


class StiffnessError(GrassHJError, ArithmeticError):
    """The ODE step size underflowed."""


class ConsistencyError(GrassHJError, RuntimeError):
    """An internal algebraic consistency check failed."""


class ConfigError(GrassHJError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
