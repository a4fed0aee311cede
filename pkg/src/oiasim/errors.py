"""Exception hierarchy shared by all oiasim modules."""


class OiaSimError(Exception):
    """Base class for every error raised by this package."""

    category = "runtime"


class ConfigurationError(OiaSimError, ValueError):
    category = "configuration"


class ContractViolation(OiaSimError, ValueError):
    """A caller broke a documented precondition (shapes, ranges)."""

    category = "contract"


class NumericalFailure(OiaSimError, ArithmeticError):
    """A decomposition did not converge.

    The offending input shape is kept on ``shape`` for diagnostics.
    """

    category = "numerical"

    def __init__(self, message, shape=None):
        super().__init__(message if shape is None else f"{message} (input shape {shape})")
        self.shape = shape


class RankDeficiencyError(OiaSimError, ArithmeticError):
    category = "rank-deficiency"


class NotWarmedUpError(OiaSimError, RuntimeError):
    category = "not-warmed-up"


class EstimationInfeasibleError(OiaSimError, RuntimeError):
    category = "estimation-infeasible"


class IncompleteTableError(OiaSimError, KeyError):
    """Raised when a throughput formula needs cells a success table lacks."""

    category = "incomplete-table"

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"success table is missing cells (m, j): {self.missing}")

    def __str__(self):
        return self.args[0]
