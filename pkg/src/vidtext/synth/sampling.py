"""Frame selection and cropping from the cached clip.

Training draws a random strictly-increasing frame subset and one random crop
offset shared by all frames; evaluation uses evenly spaced frames and a
center crop.  Annotations are sliced with the same indices and offset so
targets stay aligned with the pixels the model sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import AnnotatedClip


@dataclass
class FrameSample:
    """A sampled view of a clip: cropped frames plus provenance."""

    frames: np.ndarray  # (T, crop, crop, 3)
    indices: tuple[int, ...]  # positions into the cached frame stack, strictly increasing
    crop_offset: tuple[int, int]  # (row, col) of the crop window
    clip_id: str


def even_indices(cache_len: int, count: int) -> tuple[int, ...]:
    """Evenly spaced indices over [0, cache_len-1], half-up rounding."""
    if count == 1:
        return (math.floor((cache_len - 1) / 2 + 0.5),)
    step = (cache_len - 1) / (count - 1)
    return tuple(math.floor(i * step + 0.5) for i in range(count))


def sample_frames(
    clip: AnnotatedClip,
    count: int,
    mode: str = "train",
    crop: int | None = None,
    seed: int = 0,
) -> FrameSample:
    cache_len, height, width = clip.frames.shape[:3]
    if count > cache_len:
        raise ValueError(f"cannot sample {count} frames from a {cache_len}-frame cache")
    if count < 1:
        raise ValueError("count must be >= 1")
    if crop is None:
        crop = height
    if crop > height or crop > width:
        raise ValueError(f"crop {crop} exceeds frame size {height}x{width}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown sampling mode {mode!r}")

    if mode == "eval":
        indices = even_indices(cache_len, count)
        offset = ((height - crop) // 2, (width - crop) // 2)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([seed, cache_len, count]))
        chosen = rng.choice(cache_len, size=count, replace=False)
        indices = tuple(int(i) for i in np.sort(chosen))
        offset = (
            int(rng.integers(0, height - crop + 1)),
            int(rng.integers(0, width - crop + 1)),
        )

    r, c = offset
    frames = clip.frames[list(indices), r : r + crop, c : c + crop, :]
    return FrameSample(frames=frames, indices=indices, crop_offset=offset, clip_id=clip.clip_id)
