"""Exception hierarchy. Exit codes are those the command line maps them to."""


class SemiclassicaError(Exception):
    exit_code = 1


class InvalidParameterError(SemiclassicaError, ValueError):
    exit_code = 2


class NonConvexDomainError(SemiclassicaError, ValueError):
    """A point lies where the one-loop coefficients are complex or singular."""

    exit_code = 3

    def __init__(self, message, point=None, time=None):
        super().__init__(message)
        self.point = point
        self.time = time


class OriginSingularityError(NonConvexDomainError):
    pass


class TrajectoryTerminated(NonConvexDomainError):
    """Integration stopped because the state left the effective domain."""


class WKBInvalidError(NonConvexDomainError):
    pass


class IntegrationError(SemiclassicaError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(SemiclassicaError):
    exit_code = 4


class InsufficientCutoffError(SemiclassicaError):
    exit_code = 3

    def __init__(self, message, required_n_max=None):
        super().__init__(message)
        self.required_n_max = required_n_max


class BasisMismatchError(SemiclassicaError, ValueError):
    exit_code = 2
