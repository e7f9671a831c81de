"""Time-sync comment video recommendation with herding-aware attention."""

from .data import ContextWindow, Dataset, TimeSyncComment, build_context_windows
from .evaluate import evaluate, topx_metrics
from .model import TrainedModel, TscRecommender
from .synth import SynthConfig, generate
from .trainer import TrainConfig, fit, gradient_check

__all__ = [
    "ContextWindow",
    "Dataset",
    "SynthConfig",
    "TimeSyncComment",
    "TrainConfig",
    "TrainedModel",
    "TscRecommender",
    "build_context_windows",
    "evaluate",
    "fit",
    "generate",
    "gradient_check",
    "topx_metrics",
]
