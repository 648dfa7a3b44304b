"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the domain where a function is defined."""


class LevelTooDeepError(ValueError):
    pass


class MissingEpsilonError(ValueError):
    pass


class NonPositiveWeightError(ValueError):
    pass


class ConstraintViolation(ValueError):
    """A pair of points does not satisfy the split admissibility rule."""


class StencilError(ValueError):
    """A finite-difference stencil leaves the region where the formula is smooth."""


class WitnessMismatch(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BudgetExceeded(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
