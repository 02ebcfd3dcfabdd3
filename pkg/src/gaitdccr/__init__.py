"""Adapting a silhouette gait encoder to unlabelled data through density
clustering and soft pseudo-labels, at desk scale."""

from .config import DataConfig, RunConfig
from .estimators import BodyAugmenter, DensityClustering, GaitDCCR, GaitEncoder, GaitEnergyImage

__all__ = [
    "BodyAugmenter",
    "DataConfig",
    "DensityClustering",
    "GaitDCCR",
    "GaitEncoder",
    "GaitEnergyImage",
    "RunConfig",
]
__version__ = "0.1.0"
