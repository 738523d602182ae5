"""Exception types shared across the package."""


class ContractError(ValueError):
    """An input violates a documented precondition."""


class GridError(ContractError):
    """A time grid is malformed (unsorted, duplicated, not starting at 0)."""


class NumericError(ArithmeticError):
    """A numerical routine failed (non-convergence, NaN, singular system)."""


class ConeError(NumericError):
    """A matrix expected to be positive definite is not.

    ``minor`` is the 1-based order of the first leading principal minor that
    failed, when known.
    """

    def __init__(self, message, minor=None):
        super().__init__(message)
        self.minor = minor
