"""Uniform entry point over the eight target extractors."""

from __future__ import annotations

import numpy as np

from ..synth.sampling import FrameSample
from ..synth.scene import AnnotatedClip
from .codebook import Codebook, quantize
from .kinds import REGRESSION_LOSSES, TargetKind, TargetTensor
from .lowlevel import target_depth, target_flow, target_hog, target_pixel
from .teacher import Teacher, target_teacher


def extract_targets(
    kind: TargetKind | str,
    mask: np.ndarray,
    *,
    sample: FrameSample,
    clip: AnnotatedClip | None = None,
    codebook: Codebook | None = None,
    teacher: Teacher | None = None,
    loss_kind: str | None = None,
    hog_bins: int = 9,
    hog_cell: int = 8,
) -> TargetTensor:
    """Extract the per-masked-patch targets of one sample.

    ``loss_kind`` may switch regression kinds between l1 and l2; the discrete
    kind is always trained with cross-entropy.
    """
    kind = TargetKind(kind)
    if kind.is_discrete:
        if loss_kind not in (None, "ce"):
            raise ValueError("discrete targets use cross-entropy only")
    elif loss_kind is not None and loss_kind not in REGRESSION_LOSSES:
        raise ValueError(f"unknown regression loss {loss_kind!r}")
    reg_loss = loss_kind or "l1"

    frames = sample.frames
    if kind is TargetKind.PIXEL:
        return target_pixel(frames, mask, loss_kind=reg_loss)
    if kind is TargetKind.HOG:
        return target_hog(frames, mask, bins=hog_bins, cell=hog_cell, loss_kind=reg_loss)
    if kind is TargetKind.DEPTH:
        if clip is None:
            raise ValueError("depth targets need the annotated clip")
        return target_depth(clip, sample, mask, loss_kind=reg_loss)
    if kind is TargetKind.FLOW:
        if clip is None:
            raise ValueError("flow targets need the annotated clip")
        return target_flow(clip, sample, mask, loss_kind=reg_loss)
    if kind is TargetKind.VQ:
        if codebook is None:
            raise ValueError("vq targets need a codebook")
        return quantize(frames, mask, codebook)
    if teacher is None:
        raise ValueError(f"{kind.value} targets need a teacher")
    return target_teacher(frames, mask, teacher, kind, loss_kind=reg_loss)
