"""Exception hierarchy shared by all modules."""


class CouplingError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(CouplingError, ValueError):
    pass


class NonFiniteError(CouplingError, ValueError):
    pass


class ParameterError(CouplingError, ValueError):
    pass


class RankDeficient(CouplingError):
    """Raised by ``lstsq`` when an R diagonal falls below the requested threshold."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DegenerateResidual(CouplingError):
    """Two consecutive residuals are identical, so the Aitken factor is undefined."""


class SequenceError(CouplingError):
    pass


class AllColumnsFiltered(CouplingError):
    pass


class MaxIterationsExceeded(CouplingError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class IncompressibilityDilemma(CouplingError):
    """Enclosed incompressible fluid driven by a pure Dirichlet interface condition."""


class NonPhysical(CouplingError):
    pass


class SolverDiverged(CouplingError):
    pass


class ConfigError(CouplingError, ValueError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}" if path else reason)
        self.path = path
        self.reason = reason


class IoError(CouplingError, OSError):
    pass
