"""Simulation and analysis of opportunistic interference alignment in overlapped random access networks."""
__version__ = "0.1.0"

from .config import NetworkConfig
from .errors import (ConfigurationError, ContractViolation, EstimationInfeasibleError, IncompleteTableError,
                     NotWarmedUpError, NumericalFailure, OiaSimError, RankDeficiencyError)
from .protocols import ProtocolKind

__all__ = [
    "__version__", "NetworkConfig", "ProtocolKind", "OiaSimError", "ConfigurationError", "ContractViolation",
    "NumericalFailure", "RankDeficiencyError", "NotWarmedUpError", "EstimationInfeasibleError",
    "IncompleteTableError",
]
