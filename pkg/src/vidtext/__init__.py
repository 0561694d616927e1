"""Desk-scale video-text pre-training lab.

Synthetic moving-shape corpora with exact flow/depth annotations feed a small
video-text transformer pre-trained with masked visual modeling (eight target
kinds), video-text matching and masked language modeling, plus retrieval / QA
/ captioning adapters, a training harness, an HTTP service and a CLI.
"""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    DegenerateCodebookError,
    DegenerateTargetError,
    InvalidConfigError,
    InvalidInstanceError,
    InvalidSpecError,
    InvalidTeacherError,
    UnsupportedTargetError,
    VidTextError,
    VocabularyError,
)

__all__ = [
    "CheckpointError",
    "DegenerateCodebookError",
    "DegenerateTargetError",
    "InvalidConfigError",
    "InvalidInstanceError",
    "InvalidSpecError",
    "InvalidTeacherError",
    "UnsupportedTargetError",
    "VidTextError",
    "VocabularyError",
    "__version__",
]
