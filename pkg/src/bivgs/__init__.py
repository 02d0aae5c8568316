"""Bilingual visually grounded speech alignment at desk scale.

A numpy-only reference implementation: log-mel frontend, MLP encoders with a
small reverse-mode autodiff core, contrastive objectives with a
nearest-neighbour feature queue, synthetic triplet data, staged training and
recall@K evaluation.
"""
from .errors import (
    BivgsError,
    ConfigError,
    ContractError,
    DimensionError,
    EmptyQueueError,
    FormatError,
    NumericError,
    TooShortError,
    VersionError,
)

__version__ = "0.1.0"

__all__ = [
    "BivgsError",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "EmptyQueueError",
    "FormatError",
    "NumericError",
    "TooShortError",
    "VersionError",
    "__version__",
]
