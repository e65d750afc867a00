class LabError(Exception):
    """ Base class for everything this package raises on purpose """


class ConfigError(LabError, ValueError):
    """ Invalid configuration. `key` is the dotted config path when known """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DivergenceError(LabError, ArithmeticError):
    pass


class InfeasibleError(LabError, ValueError):
    pass


class UnboundedBallError(LabError):
    pass


class EstimateRejected(LabError):
    """ An instance fails a precondition of the estimate it was fed to """


class SolverError(LabError, RuntimeError):

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []
