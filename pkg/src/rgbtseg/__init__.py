"""Desk-scale RGB-thermal semantic segmentation with a frozen surrogate
backbone, low-rank adapters, dynamic feature fusion, and text-conditioned
mask decoding."""

from .config import ModelConfig, RunConfig, TrainConfig
from .model import RgbtSegModel
from .prompts import ClassVocabulary, PointPrompt
from .tensor import Tensor

__all__ = [
    "ClassVocabulary",
    "ModelConfig",
    "PointPrompt",
    "RgbtSegModel",
    "RunConfig",
    "Tensor",
    "TrainConfig",
]

__version__ = "0.1.0"
