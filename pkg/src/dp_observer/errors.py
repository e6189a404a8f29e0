"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: domain/input problems exit 1,
stability or infeasibility exits 2, solver failures exit 3.
"""


class ObserverError(Exception):
    """Base class for all package errors."""


class DomainError(ObserverError, ValueError):
    """An argument lies outside its documented domain."""


class DimensionError(DomainError):
    """Matrix or vector shapes are incompatible."""


class RankError(DomainError):
    """A matrix expected to have full row rank does not."""


class UnsupportedBoundaryError(DomainError):
    """The plant sits on the unsupported boundary ``||A|| == 1``."""


class StabilityError(ObserverError):
    """The error dynamics are not a contraction, so a bound is undefined."""


class InfeasibleError(ObserverError):
    """No gain satisfies the positivity and contraction constraints."""


class ConvergenceError(ObserverError):
    """An iterative routine hit its iteration cap without converging."""


class BoundViolationError(ObserverError):
    """An empirical sensitivity exceeded its proven upper bound."""


class NonFiniteError(ObserverError):
    """A simulation produced NaN or infinite values."""
