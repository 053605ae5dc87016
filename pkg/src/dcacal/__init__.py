"""Confidence calibration toolkit built around the DCA auxiliary loss."""
from . import _backend
from .data import Dataset, GroundTruthCurve, gen_blobs, gen_toy1d, split
from .errors import DegenerateBatch, EmptyBatch, EmptyBin, InvalidInput
from .losses import LossKind, LossSpec, composite_loss
from .metrics import CalibrationReport, calibration_report, ece, mce, nll
from .nn import MlpModel, TrainConfig, forward, init_mlp, train
from .posthoc import TemperatureScaler, apply_temperature, fit_temperature
from .probs import PredictionSet, partition, predict, softmax

backend = _backend.name

__all__ = [
    "DegenerateBatch", "EmptyBatch", "EmptyBin", "InvalidInput",
    "LossKind", "LossSpec", "composite_loss",
    "CalibrationReport", "calibration_report", "ece", "mce", "nll",
    "Dataset", "GroundTruthCurve", "gen_blobs", "gen_toy1d", "split",
    "MlpModel", "TrainConfig", "forward", "init_mlp", "train",
    "TemperatureScaler", "apply_temperature", "fit_temperature",
    "PredictionSet", "partition", "predict", "softmax", "backend",
]
__version__ = "0.1.0"
