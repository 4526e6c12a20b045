"""Classification-embedding (CE) diagnostics for parametric classifiers on imbalanced data."""

from ._validation import CemagError, ConfigError, ConvergenceError, DataError, DiagnosticError, DimensionError
from .augment import AugmentConfig, Oversampler, SyntheticBatch, rebalance
from .data import Dataset, EmbeddingSet, load_csv, load_embedding_table, stratified_split, synth_gaussian
from .diagnostics import (
    class_unique_ce,
    frequency_magnitude_profile,
    minimal_ce_count,
    topk_contribution_share,
)
from .models import KernelSVC, LogisticRegressionGD, SoftmaxHead, TrainConfig
from .probe import CEProbe, Decomposition, batch_decompose, decompose

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "CEProbe",
    "CemagError",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "Dataset",
    "Decomposition",
    "DiagnosticError",
    "DimensionError",
    "EmbeddingSet",
    "KernelSVC",
    "LogisticRegressionGD",
    "Oversampler",
    "SoftmaxHead",
    "SyntheticBatch",
    "TrainConfig",
    "batch_decompose",
    "class_unique_ce",
    "decompose",
    "frequency_magnitude_profile",
    "load_csv",
    "load_embedding_table",
    "minimal_ce_count",
    "rebalance",
    "stratified_split",
    "synth_gaussian",
    "topk_contribution_share",
]
