"""Vanishing point detection from recurring patterns of local features."""

from .config import PipelineConfig
from .errors import (DegenerateError, FormatError, InsufficientLinesError,
                     NoVanishingPointError, VanishKitError, WeightCollapseError)
from .pipeline import DetectionOutput, detect_pipeline

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig", "DetectionOutput", "detect_pipeline", "VanishKitError",
    "DegenerateError", "FormatError", "InsufficientLinesError",
    "NoVanishingPointError", "WeightCollapseError", "__version__",
]
