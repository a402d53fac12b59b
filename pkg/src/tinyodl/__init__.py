"""Simulator for supervised on-device learning with hashed input weights."""
from .costmodel import ModelShape, PowerParams, average_power, memory_kb, parameter_count
from .device import EdgeDevice
from .drift import CentroidDrift, ScriptedDrift
from .experiment import ExperimentConfig, run_experiment, run_trial, sweep_theta
from .hashweights import HashedWeights, StoredWeights, Xorshift16
from .oselm import NumericalError, OSELMClassifier
from .pruning import AutoTuner, confidence

__version__ = "0.1.0"

__all__ = [
    "AutoTuner", "CentroidDrift", "EdgeDevice", "ExperimentConfig", "HashedWeights",
    "ModelShape", "NumericalError", "OSELMClassifier", "PowerParams", "ScriptedDrift",
    "StoredWeights", "Xorshift16", "average_power", "confidence", "memory_kb",
    "parameter_count", "run_experiment", "run_trial", "sweep_theta",
]
