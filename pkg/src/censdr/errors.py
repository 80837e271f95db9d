"""Exception hierarchy for censdr."""


class CensdrError(Exception):
    """Base class for all censdr errors."""


class DomainError(CensdrError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateCorrelationError(DomainError):
    """|rho| = 1 where a nondegenerate correlation is required."""


class InfeasibleProbabilityError(DomainError):
    """Probability inputs violate Frechet bounds or interval feasibility."""


class DegenerateMarginalError(DomainError):
    """A marginal probability sits on {0, 1} where an interior value is needed."""


class WeakInstrumentError(CensdrError):
    """Instrument does not shift the selection probability (p0 == p1)."""


class NonconvergenceError(CensdrError):
    """Iterative solver exhausted its budget.

    Carries the last iterate and residuals for diagnosis.
    """

    def __init__(self, message, residuals=None, iterate=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterate = iterate


class SeparationError(CensdrError):
    """Binary indicator is constant: the probit likelihood has no interior maximum."""


class EmptySelectionError(CensdrError):
    """No selected observations (all d = 0)."""


class BadStartError(CensdrError):
    """Objective not finite at the optimizer's starting point."""


class CellFitError(CensdrError):
    """Estimation failed at a specific grid cell."""

    def __init__(self, message, step=None, cell=None):
        super().__init__(message)
        self.step = step
        self.cell = cell


class SingularHessianError(CensdrError):
    """A Hessian block required for influence functions is singular."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class DegenerateCellError(CensdrError):
    """Zero variance at a grid cell where a t-statistic is required."""


class OffGridError(CensdrError):
    """Requested evaluation point is not on the fitted grid."""


class EmptyStratumError(CensdrError):
    """Selection stratum has (numerically) zero probability."""


class InvalidDgpError(CensdrError):
    """Supplied coefficient paths do not define a valid joint distribution."""


class DataError(CensdrError):
    """Structured input-data problem; carries offending row numbers."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


class ConfigError(CensdrError):
    """Invalid run configuration."""
