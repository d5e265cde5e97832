"""Exception hierarchy shared across the package."""


class AlphaTestError(Exception):
    """Base class for all errors raised by this package."""


class InvalidData(AlphaTestError):
    """Input data violates a documented contract (shape, finiteness, range)."""


class SingularDesign(AlphaTestError):
    """Factor design matrix is numerically singular."""

    def __init__(self, message: str, condition_number: float = float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class InsufficientSample(AlphaTestError):
    """Too few time periods for the requested operation."""


class DegenerateResidual(AlphaTestError):
    """A residual series has (numerically) zero variance."""


class InvalidPrecision(AlphaTestError):
    """Precision matrix fails a positivity requirement."""


class InvalidK(AlphaTestError):
    """Requested sparsity level k is out of range."""


class BudgetExceeded(AlphaTestError):
    """Subset enumeration would exceed the hard budget."""


class Unconverged(AlphaTestError):
    """Iterative solver did not reach its tolerance within max_iter."""

    def __init__(self, message: str, kkt_residual: float = float("nan")):
        super().__init__(message)
        self.kkt_residual = kkt_residual


class IndefiniteInput(AlphaTestError):
    """Matrix required to be positive-definite is not."""


class DegenerateNull(AlphaTestError):
    """Simulated null distribution has zero variance for some k."""


class SingularCovariance(AlphaTestError):
    """Covariance estimate cannot be inverted."""


class ExperimentInvalid(AlphaTestError):
    """Too many Monte Carlo replicates failed for the report to be trusted."""


class AlignmentError(AlphaTestError):
    """Dates do not line up across input files."""


class ParseError(AlphaTestError):
    """A cell in an input file does not parse as a number."""

    def __init__(self, message: str, row: int = -1, column: str = ""):
        super().__init__(message)
        self.row = row
        self.column = column
