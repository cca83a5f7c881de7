"""Extended adaptive observer for uncertain LTI plants with exosystem disturbances."""
from .canonical import CanonicalDecomposition, benchmark_decomposition, decompose
from .config import ConfigError, SimConfig
from .drem import ExcitationMonitor, RegressionPair, fe_monitor, mix, normalize
from .filters import FilterBankState, FilterDesign, design_beta
from .observer import EstimateSet, Gains
from .plant import ExoModel, PlantModel, benchmark_model

__version__ = "0.1.0"

__all__ = [
    "CanonicalDecomposition", "ConfigError", "EstimateSet", "ExcitationMonitor", "ExoModel",
    "FilterBankState", "FilterDesign", "Gains", "PlantModel", "RegressionPair", "SimConfig",
    "benchmark_decomposition", "benchmark_model", "decompose", "design_beta", "fe_monitor", "mix",
    "normalize",
]
