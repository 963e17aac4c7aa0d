"""Soft-sensor toolkit for wort density during beer fermentation.

Simulates tank sensor streams, fuses sparse manual probes into dense
density targets, windows everything into training frames and trains a
from-scratch LSTM regressor that predicts density from pressure and
temperature alone.
"""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError
from .net import ModelConfig, ModelParams, TrainConfig
from .regressor import LstmDensityRegressor
from .sim import NoiseLevels, ProbeEvent, ProcessConfig, ProcessRun, SensorSample, simulate_process
from .store import ModelBundle, load_params, save_params
from .targets import Reading, StepFunction, TargetCurve, build_target_curve
from .windows import (
    DataFrameWindow,
    NormStats,
    WindowBatch,
    WindowNormalizer,
    build_windows,
    split_runs,
)

__all__ = [
    "NumericalError",
    "ValidationError",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "LstmDensityRegressor",
    "NoiseLevels",
    "ProbeEvent",
    "ProcessConfig",
    "ProcessRun",
    "SensorSample",
    "simulate_process",
    "ModelBundle",
    "load_params",
    "save_params",
    "Reading",
    "StepFunction",
    "TargetCurve",
    "build_target_curve",
    "DataFrameWindow",
    "NormStats",
    "WindowBatch",
    "WindowNormalizer",
    "build_windows",
    "split_runs",
    "__version__",
]
