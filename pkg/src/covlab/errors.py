"""Exception hierarchy shared by all covlab modules."""


class CovlabError(Exception):
    """Base class for every error raised by covlab."""


class SpecMismatchError(CovlabError, ValueError):
    """Operands live on different grids."""


class DomainError(CovlabError, ValueError):
    """An argument lies outside the domain of an operation (negative time, reversed interval...)."""


class AlignmentError(DomainError):
    """A time or endpoint is not an integer multiple of the grid spacing."""


class UnsupportedOperationError(CovlabError):
    """The operation is not defined for this object (e.g. density of a singular measure)."""


class CapacityError(CovlabError, MemoryError):
    """A memory guard was exceeded."""


class IntegrationError(CovlabError, ArithmeticError):
    """A time integrator became unstable."""


class SeriesDivergenceError(CovlabError, ArithmeticError):
    """A Dyson series failed to converge within the allowed order."""


class ConfigError(CovlabError, ValueError):
    """A scenario configuration is invalid."""
