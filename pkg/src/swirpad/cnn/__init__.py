"""Residual CNN for PAD, implemented directly on numpy."""

from .net import (
    INPUT_SHAPE,
    REFERENCE_ARCH,
    ResidualNet,
    build_net,
    build_reference_net,
    extract_features,
    forward,
    load_net,
    save_net,
    scores_from_logits,
)
from .train import TrainConfig, gradient_check, train

__all__ = [
    "INPUT_SHAPE",
    "REFERENCE_ARCH",
    "ResidualNet",
    "TrainConfig",
    "build_net",
    "build_reference_net",
    "extract_features",
    "forward",
    "gradient_check",
    "load_net",
    "save_net",
    "scores_from_logits",
    "train",
]
