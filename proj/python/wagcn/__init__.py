"""Weakly supervised adaptive graph convolutional network for video anomaly
detection: training on per-segment features with video-level labels,
per-segment anomaly scoring, and frame-level ROC/AUC evaluation."""

try:
    from ._core import (
        FormatError,
        IoError,
        NumericError,
        ValidationError,
        compute_k,
        evaluate,
        expand_scores,
        gradcheck,
        roc_auc,
        score_videos,
        synth_generate,
        temporal_adjacency,
        train,
        uniform_sample_indices,
    )
except ImportError:  # in-tree runs put the built extension directly on sys.path
    from _core import (  # type: ignore
        FormatError,
        IoError,
        NumericError,
        ValidationError,
        compute_k,
        evaluate,
        expand_scores,
        gradcheck,
        roc_auc,
        score_videos,
        synth_generate,
        temporal_adjacency,
        train,
        uniform_sample_indices,
    )

__all__ = [
    "FormatError",
    "IoError",
    "NumericError",
    "ValidationError",
    "compute_k",
    "evaluate",
    "expand_scores",
    "gradcheck",
    "roc_auc",
    "score_videos",
    "synth_generate",
    "temporal_adjacency",
    "train",
    "uniform_sample_indices",
]

__version__ = "0.1.0"
