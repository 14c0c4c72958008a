"""
Exception hierarchy for hetwls.

Every error carries a class-level exit code so the command-line tool can map
failures to stable process exit statuses.
"""

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


class HetWLSError(Exception):
    """Base class for every error raised by hetwls."""

    exit_code = EXIT_INTERNAL


class UsageError(HetWLSError, ValueError):
    """An argument value the command cannot run with, e.g. zero replications."""

    exit_code = EXIT_USAGE


# ============================================================================
# DATA / INPUT (exit 3)
# ============================================================================

class DataError(HetWLSError):
    exit_code = 3


class DegenerateSample(DataError, ValueError):
    """Too few observations for the number of parameters."""


class DimensionMismatch(DataError, ValueError):
    pass


class NonFiniteInput(DataError, ValueError):
    pass


class TooFewObservations(DataError, ValueError):
    pass


class SplitTooSmall(DataError, ValueError):
    pass


class NoReports(DataError, ValueError):
    """Artifact emission was asked to render nothing."""


class InputFileNotFound(DataError, FileNotFoundError):
    pass


class MissingColumn(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing column"


class ParseError(DataError, ValueError):
    """A CSV cell could not be used; rows are numbered from 1 after the header."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NonNumericCell(ParseError):
    pass


# ============================================================================
# LINEAR ALGEBRA (exit 4)
# ============================================================================

class SingularDesign(HetWLSError, ValueError):
    """Rank-deficient or ill-conditioned (reciprocal condition < 1e-12) design."""

    exit_code = 4


# ============================================================================
# WEIGHTS / VARIANCES (exit 5)
# ============================================================================

class WeightError(HetWLSError, ValueError):
    exit_code = 5


class NonPositiveWeight(WeightError):
    pass


class WeightOverflow(WeightError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonPositiveVariance(WeightError):
    pass


class NonPositiveRegressor(WeightError):
    pass


# ============================================================================
# ESTIMATION (exit 6)
# ============================================================================

class EstimationError(HetWLSError):
    exit_code = 6


class ZeroRankVariance(EstimationError, ValueError):
    """A constant vector was ranked; the rank correlation is undefined."""


class DegenerateCorrelation(EstimationError, ValueError):
    pass


class NoFeasibleDirection(EstimationError):
    """Every searched direction gives some x_i'k <= w_floor or a constant combination."""


class AssumptionOneViolated(EstimationError):
    """The combination weights are all equal."""


class AllWeightsEqual(EstimationError):
    pass


class ZeroResiduals(EstimationError):
    pass


class NoRootInInterval(EstimationError):
    pass


class MaxIterationsExceeded(EstimationError):
    pass


class ZeroDegreesOfFreedom(EstimationError):
    pass


# ============================================================================
# OUTPUT (exit 7)
# ============================================================================

class IoError(HetWLSError, OSError):
    exit_code = 7
