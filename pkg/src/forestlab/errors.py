"""Exception types shared across forestlab."""


class ForestLabError(Exception):
    pass


class SingularMatrix(ForestLabError, ValueError):
    pass


class ZeroPivot(ForestLabError, ValueError):
    pass


class UnsupportedDimension(ForestLabError, ValueError):
    pass


class InvalidRegime(ForestLabError, ValueError):
    pass


class BudgetExceeded(ForestLabError):
    """Base class for searches that stopped at a configured budget."""


class EnumerationBudgetExceeded(BudgetExceeded):
    pass


class SearchBudgetExceeded(BudgetExceeded):
    pass


class RecursionBudgetExceeded(BudgetExceeded):
    pass


class HypothesisViolated(ForestLabError):
    """The homogeneous hypothesis of a transference step fails at ``m``."""

    def __init__(self, m, value, threshold):
        self.m = m
        self.value = value
        self.threshold = threshold
        super().__init__(
            f"max ||m*ratio|| = {value:.6g} < {threshold:.6g} at m = {m}")
