"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input sits on (or within the guard radius of) a pole or branch point."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    ``last`` carries the last iterate (or last good path point) and
    ``residual`` its residual norm, so callers can serialize them.
    """

    def __init__(self, message, *, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class ConditioningError(RuntimeError):
    """A linear solve was rejected because its condition number is too large."""

    def __init__(self, message, *, cond):
        super().__init__(message)
        self.cond = cond
