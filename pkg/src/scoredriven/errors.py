"""Exception hierarchy. Everything a user can trigger derives from ScoreDrivenError."""


class ScoreDrivenError(Exception):
    """Base class for user-facing errors."""


class DomainError(ScoreDrivenError, ValueError):
    """Observation outside the support or parameter outside its domain."""


class UnsupportedScaling(ScoreDrivenError, ValueError):
    pass


class SingularInformation(ScoreDrivenError, ArithmeticError):
    pass


class FilterDivergence(ScoreDrivenError, ArithmeticError):
    """The recursion left the representable range or the parameter domain."""

    def __init__(self, message, period=None):
        super().__init__(message)
        self.period = period


class NonstationaryB(ScoreDrivenError, ArithmeticError):
    """I - sum(B_j) is singular, so the unconditional mean does not exist."""


class DegenerateData(ScoreDrivenError, ValueError):
    pass


class AllStartsFailed(ScoreDrivenError, RuntimeError):
    pass


class EmptyInput(ScoreDrivenError, ValueError):
    pass
