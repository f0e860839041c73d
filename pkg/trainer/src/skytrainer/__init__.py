"""Toy trainer for sky-lighting estimation from single crops.

Consumes the dataset artifacts published by the ``skyfit`` pipeline
(PNG crops plus a JSONL manifest with 160-bin sun targets and a
4-vector of lighting/camera parameters) and trains a small two-head
CNN: a sun-position head emitting a log-distribution over the sky bins
and a linear parameter-regression head.
"""

from .model import ModelSpec, SkyCNN
from .train import TrainConfig, export_fixtures, predict, train

__all__ = [
    "ModelSpec",
    "SkyCNN",
    "TrainConfig",
    "train",
    "predict",
    "export_fixtures",
]
