"""Vision-transformer domain adaptation with transferability-guided attention and feature fusion."""

from .model import ModelConfig
from .trainer import TrainConfig

__version__ = "0.1.0"
