"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class DimensionError(ValueError):
    """A matrix has the wrong shape or exceeds a size cap."""


class BracketError(ValueError):
    """Root-finding endpoints do not straddle the target."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


class InvalidBudgetError(ValueError):
    """An (epsilon, delta) pair violates the budget constraints."""


class NotionMismatchError(ValueError):
    """Sensitivity bounds or calibrations refer to different neighbor relations."""
