"""Exact-oracle target extractors: pixels, oriented gradients, depth, flow.

All extractors share the canonical row order (t-major, then grid row, then
grid column over mask-true positions) and return one flattened vector per
masked patch.  Depth and flow read the generator's ground-truth annotations
sliced with the same frame indices and crop offset as the pixels, so they can
be re-derived from the scene bit-exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import UnsupportedTargetError
from ..synth.sampling import FrameSample
from ..synth.scene import AnnotatedClip
from .kinds import TargetKind, TargetTensor, masked_positions


def _grid_of(frames: np.ndarray, mask: np.ndarray) -> int:
    t, h = frames.shape[0], frames.shape[1]
    gh = mask.shape[1]
    if mask.shape[0] != t or h % gh or frames.shape[2] % mask.shape[2]:
        raise ValueError(f"mask shape {mask.shape} does not tile frames {frames.shape}")
    return h // gh


def _gather_patches(field: np.ndarray, mask: np.ndarray, patch: int) -> tuple[np.ndarray, np.ndarray]:
    """Slice (T, H, W, C) at masked patches -> (rows, patch*patch*C)."""
    pos = masked_positions(mask)
    rows = np.empty((pos.shape[0], patch * patch * field.shape[-1]), dtype=np.float64)
    for i, (t, r, c) in enumerate(pos):
        rows[i] = field[t, r * patch : (r + 1) * patch, c * patch : (c + 1) * patch].reshape(-1)
    return rows, pos


def target_pixel(frames: np.ndarray, mask: np.ndarray, loss_kind: str = "l1") -> TargetTensor:
    """Raw RGB values of each masked patch, already normalized to [0, 1]."""
    patch = _grid_of(frames, mask)
    rows, pos = _gather_patches(frames, mask, patch)
    return TargetTensor(TargetKind.PIXEL, pos, values=rows, loss_kind=loss_kind)


# ----------------------------------------------------------------------- HOG


def _centered_gradient(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(gy, gx): centered differences inside, one-sided at the borders."""
    gy, gx = np.gradient(gray)
    return gy, gx


def hog_cell_histograms(gray: np.ndarray, bins: int = 9, cell: int = 8) -> np.ndarray:
    """Per-cell unsigned orientation histograms with soft binning.

    Bin i is centered at orientation i * pi/bins (bin 0 = horizontal
    gradient); each pixel votes its magnitude into the two nearest bin
    centers, circular at pi.  Cells tile the image in ``cell``-pixel steps
    (ragged final cells when sizes do not divide).
    """
    h, w = gray.shape
    gy, gx = _centered_gradient(gray)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    width = np.pi / bins
    pos = theta / width
    lo = np.floor(pos).astype(int) % bins
    hi = (lo + 1) % bins
    w_hi = pos - np.floor(pos)
    w_lo = 1.0 - w_hi

    ch, cw = -(-h // cell), -(-w // cell)
    hist = np.zeros((ch, cw, bins), dtype=np.float64)
    cy, cx = np.mgrid[0:h, 0:w]
    cy, cx = cy // cell, cx // cell
    np.add.at(hist, (cy, cx, lo), mag * w_lo)
    np.add.at(hist, (cy, cx, hi), mag * w_hi)
    return hist


def normalize_histograms(hist: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """L2-normalize each cell histogram over its 2x2-cell block."""
    ch, cw, _ = hist.shape
    out = np.zeros_like(hist)
    for by in range(0, ch, 2):
        for bx in range(0, cw, 2):
            block = hist[by : by + 2, bx : bx + 2]
            norm = np.sqrt((block**2).sum())
            out[by : by + 2, bx : bx + 2] = block / max(norm, eps)
    return out


def hog_map(gray: np.ndarray, bins: int = 9, cell: int = 8) -> np.ndarray:
    """Dense (H, W) oriented-gradient response map.

    Each pixel reads its cell's block-normalized histogram at the pixel's own
    orientation (soft-binned with the same two-center weights used during
    voting).  A constant image has zero gradients everywhere and maps to an
    all-zero response.
    """
    h, w = gray.shape
    hist = normalize_histograms(hog_cell_histograms(gray, bins, cell))
    gy, gx = _centered_gradient(gray)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    width = np.pi / bins
    pos = theta / width
    lo = np.floor(pos).astype(int) % bins
    hi = (lo + 1) % bins
    w_hi = pos - np.floor(pos)
    cy, cx = np.mgrid[0:h, 0:w]
    cy, cx = cy // cell, cx // cell
    return hist[cy, cx, lo] * (1.0 - w_hi) + hist[cy, cx, hi] * w_hi


def to_gray(frames: np.ndarray) -> np.ndarray:
    return frames.mean(axis=-1)


def target_hog(
    frames: np.ndarray, mask: np.ndarray, bins: int = 9, cell: int = 8, loss_kind: str = "l1"
) -> TargetTensor:
    """Dense HOG response of each masked patch, one value per pixel."""
    patch = _grid_of(frames, mask)
    if patch % cell:
        raise ValueError(f"cell size {cell} must divide patch size {patch}")
    maps = np.stack([hog_map(to_gray(f), bins, cell) for f in frames])[..., None]
    rows, pos = _gather_patches(maps, mask, patch)
    return TargetTensor(TargetKind.HOG, pos, values=rows, loss_kind=loss_kind)


# --------------------------------------------------------------- depth, flow


def _crop_slices(sample: FrameSample, size: int) -> tuple[slice, slice]:
    r, c = sample.crop_offset
    return slice(r, r + size), slice(c, c + size)


def target_depth(
    clip: AnnotatedClip, sample: FrameSample, mask: np.ndarray, loss_kind: str = "l1"
) -> TargetTensor:
    """Ground-truth depth of each masked patch, aligned to the sample's crop."""
    if clip.gt_depth is None:
        raise UnsupportedTargetError("clip carries no depth annotations")
    crop = sample.frames.shape[1]
    patch = _grid_of(sample.frames, mask)
    rs, cs = _crop_slices(sample, crop)
    depth = clip.gt_depth[list(sample.indices), rs, cs, :]
    rows, pos = _gather_patches(depth, mask, patch)
    return TargetTensor(TargetKind.DEPTH, pos, values=rows, loss_kind=loss_kind)


def target_flow(
    clip: AnnotatedClip, sample: FrameSample, mask: np.ndarray, loss_kind: str = "l1"
) -> TargetTensor:
    """Accumulated ground-truth flow between consecutive sampled frames.

    The target for a masked patch at sample position t is the per-pixel sum
    of the cached per-step flow fields between cache indices t and t+1 of the
    sample.  Masked patches on the final sampled frame have no successor and
    are dropped from the rows.
    """
    if clip.gt_flow is None:
        raise UnsupportedTargetError("clip carries no flow annotations")
    if len(sample.indices) < 2:
        raise UnsupportedTargetError("flow targets need at least two sampled frames")
    crop = sample.frames.shape[1]
    patch = _grid_of(sample.frames, mask)
    rs, cs = _crop_slices(sample, crop)
    t_count = len(sample.indices)
    accum = np.stack(
        [
            clip.gt_flow[sample.indices[t] : sample.indices[t + 1], rs, cs, :].sum(axis=0)
            for t in range(t_count - 1)
        ]
    )
    rows, pos = _gather_patches(accum, mask[:-1], patch)
    return TargetTensor(TargetKind.FLOW, pos, values=rows, loss_kind=loss_kind)
