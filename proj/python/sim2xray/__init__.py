"""Unpaired simulation-to-X-ray translation with semantic token matching."""

import torch  # noqa: F401

from ._core import (
    ConfigError,
    Error,
    IoError,
    NumericError,
    ShapeError,
    __version__,
    cross_domain_matrices,
    feature_stats,
    frechet_distance,
    patchify,
    run_cli,
    self_domain_matrix,
    semantic_loss,
    semantic_loss_gradient,
    synth_corpus,
)

__all__ = [
    "ConfigError",
    "Error",
    "IoError",
    "NumericError",
    "ShapeError",
    "__version__",
    "cross_domain_matrices",
    "feature_stats",
    "frechet_distance",
    "patchify",
    "run_cli",
    "self_domain_matrix",
    "semantic_loss",
    "semantic_loss_gradient",
    "synth_corpus",
]
