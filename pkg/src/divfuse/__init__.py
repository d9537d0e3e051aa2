"""Affine fusion of ECG feature distributions across recording devices."""

from .errors import DivfuseError, StageError
from .features import DistributionClass, FeatureKind, FeatureMatrix, FeatureParams
from .fusion import AffineParams, FusionConfig, FusionReport, KdeModel, fuse
from .evaluation import ExperimentConfig, Metrics, compare_pipelines, run_experiments
from .gbdt import GbdtConfig

__version__ = "0.1.0"

__all__ = [
    "AffineParams",
    "DistributionClass",
    "DivfuseError",
    "ExperimentConfig",
    "FeatureKind",
    "FeatureMatrix",
    "FeatureParams",
    "FusionConfig",
    "FusionReport",
    "GbdtConfig",
    "KdeModel",
    "Metrics",
    "StageError",
    "compare_pipelines",
    "fuse",
    "run_experiments",
]
