"""Efficient token mixers and anchor-based keyshot video summarization."""
from .config import ModelConfig, RunConfig, TrainConfig
from .pooling_heads import count_params, init_params, model_forward
from .summarize import make_summary

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "count_params",
    "init_params",
    "make_summary",
    "model_forward",
]
