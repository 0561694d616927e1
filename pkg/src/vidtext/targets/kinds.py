"""Masked-visual-modeling target kinds and their tensor contracts."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class TargetKind(str, Enum):
    PIXEL = "pixel"  # raw RGB values of the masked patch
    HOG = "hog"  # dense oriented-gradient response map
    DEPTH = "depth"  # ground-truth depth map
    FLOW = "flow"  # ground-truth optical flow between consecutive samples
    VQ = "vq"  # discrete codebook ids (classification)
    SIF = "sif"  # frozen per-frame image-feature teacher
    TVF = "tvf"  # frozen space-time-cube video-feature teacher
    MMF = "mmf"  # frozen multimodal image-feature teacher

    @property
    def is_discrete(self) -> bool:
        return self is TargetKind.VQ

    @property
    def is_teacher(self) -> bool:
        return self in (TargetKind.SIF, TargetKind.TVF, TargetKind.MMF)

    def default_loss(self) -> str:
        return "ce" if self.is_discrete else "l1"


REGRESSION_LOSSES = ("l1", "l2")


def target_dim(kind: TargetKind, patch_size: int, codebook_size: int = 64, teacher_dim: int = 16) -> int:
    """Per-patch prediction width for each target kind."""
    p = patch_size
    return {
        TargetKind.PIXEL: p * p * 3,
        TargetKind.HOG: p * p,
        TargetKind.DEPTH: p * p,
        TargetKind.FLOW: p * p * 2,
        TargetKind.VQ: codebook_size,
        TargetKind.SIF: teacher_dim,
        TargetKind.TVF: teacher_dim,
        TargetKind.MMF: teacher_dim,
    }[kind]


@dataclass
class TargetTensor:
    """Per-masked-patch targets in the canonical flat order.

    ``positions`` holds (t, grid_row, grid_col) for every row; rows follow
    t-major, then row, then column ordering of the mask.  Regression kinds
    fill ``values`` with shape (rows, dim); the discrete kind fills ``ids``
    with shape (rows,).  Flow keeps only masked patches whose frame has a
    successor in the sample.
    """

    kind: TargetKind
    positions: np.ndarray  # (rows, 3) int64
    values: np.ndarray | None = None
    ids: np.ndarray | None = None
    loss_kind: str = ""
    normalization: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.loss_kind:
            self.loss_kind = self.kind.default_loss()
        rows = self.positions.shape[0]
        if self.kind.is_discrete:
            if self.ids is None or self.ids.shape != (rows,):
                raise ValueError("discrete targets need one class id per row")
        else:
            if self.values is None or self.values.shape[0] != rows:
                raise ValueError("regression targets need one vector per row")
            if rows and not np.isfinite(self.values).all():
                raise ValueError("regression targets must be finite")

    @property
    def rows(self) -> int:
        return self.positions.shape[0]


def masked_positions(mask: np.ndarray) -> np.ndarray:
    """Flat (t, row, col) index list of a (T, Gh, Gw) mask, canonical order."""
    return np.argwhere(mask).astype(np.int64)
