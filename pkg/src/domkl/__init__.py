"""Distributed online multiple-kernel learning with random Fourier features."""

from .errors import (ConfigurationError, ConvergenceError, DomklError, IngestionError, InputError,
                     InvariantError, NumericError, ProtocolError)
from .kernels import KernelDictionary, KernelSpec, RFFeatureMap, default_dictionary, sample_feature_map
from .losses import QuadraticLoss
from .metrics import MetricsReport, consensus_violation, mse, regret_accuracy, regret_discrepancy
from .simulator import SimulationConfig, SimulationResult, run, run_centralized_omkl
from .topology import Topology, preset

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConvergenceError", "DomklError", "IngestionError", "InputError", "InvariantError",
    "NumericError", "ProtocolError", "KernelDictionary", "KernelSpec", "RFFeatureMap", "default_dictionary",
    "sample_feature_map", "QuadraticLoss", "MetricsReport", "consensus_violation", "mse", "regret_accuracy",
    "regret_discrepancy", "SimulationConfig", "SimulationResult", "run", "run_centralized_omkl", "Topology",
    "preset",
]
