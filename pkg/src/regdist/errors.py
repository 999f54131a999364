"""Exception types shared across the toolkit."""


class RegdistError(Exception):
    """Base class for all toolkit errors."""


class ZeroPoint(RegdistError):
    """Kernel evaluated at the origin."""


class OrderUnavailable(RegdistError):
    """Requested derivative order exceeds the kernel's capability."""


class NonpositiveKernel(RegdistError):
    """A kernel sample was <= 0 where positivity is required."""


class QuadratureFailure(RegdistError):
    """Adaptive quadrature did not reach the requested tolerance."""


class UnsupportedDimension(RegdistError):
    """Operation not implemented for this ambient dimension."""


class ScaleViolation(RegdistError):
    """Glued-kernel scale sequence violates the decay schedule."""


class NotRadial(RegdistError):
    """Operation requires a radial kernel."""


class BadSpec(RegdistError):
    """Malformed generator or config specification."""


class ScaleOutOfRange(RegdistError):
    """Requested scale is outside the trusted range of the discretization."""


class EmptyCone(RegdistError):
    """No admissible sample points found in a non-tangential cone."""


class TooCloseToSupport(RegdistError):
    """Field evaluation requested inside the guard band of the support."""


class TailUnavailable(RegdistError):
    """Tail correction requested for a measure without a tail model."""


class TailModelInvalid(RegdistError):
    """Kernel does not settle to a constant at infinity; tail model invalid."""


class DivergentTail(RegdistError):
    """Integrand does not decay fast enough for a convergent tail."""


class DegenerateFit(RegdistError):
    """Not enough local mass to fit a candidate flat measure."""


class DegenerateNullSpace(RegdistError):
    """Constraint matrix has no numerically meaningful null space."""


class BudgetViolation(RegdistError):
    """Sampled decay exceeds the configured glue budget."""


class ConfigError(RegdistError):
    """Scenario/config file could not be parsed or is inconsistent."""
