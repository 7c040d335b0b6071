"""Density estimation with bijective sigmoid decoders and Beta-distributed latents."""

from .beta import BetaParams, TargetSchedule
from .classifier import ClassifierBundle, classify, classify_with_reject, train_class_models
from .data_io import Dataset, load_dataset, load_model, save_model
from .density import ModelBundle, entropy_report, log_density, sample
from .network import Decoder, Encoder, Layer
from .objective import PenaltyWeights
from .preprocess import Preprocessor, fit_preprocessor
from .trainer import TrainConfig, train

__all__ = [
    "BetaParams",
    "TargetSchedule",
    "ClassifierBundle",
    "classify",
    "classify_with_reject",
    "train_class_models",
    "Dataset",
    "load_dataset",
    "load_model",
    "save_model",
    "ModelBundle",
    "entropy_report",
    "log_density",
    "sample",
    "Decoder",
    "Encoder",
    "Layer",
    "PenaltyWeights",
    "Preprocessor",
    "fit_preprocessor",
    "TrainConfig",
    "train",
]
