"""Discrete visual tokens from a k-means codebook over patch descriptors.

The descriptor of a patch is its 4x4 grid of sub-cell RGB means (48 values),
so tokenization keeps the one-token-per-patch spatial correspondence while
staying cheap enough to rebuild per run.  Quantization assigns the nearest
centroid by squared L2 distance, first index on ties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DegenerateCodebookError
from .kinds import TargetKind, TargetTensor, masked_positions

DESCRIPTOR_CELLS = 4
KMEANS_ITERATIONS = 25


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (K, dim)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    def assign(self, descriptors: np.ndarray) -> np.ndarray:
        """Nearest centroid id for each descriptor row."""
        d2 = ((descriptors[:, None, :] - self.centroids[None, :, :]) ** 2).sum(-1)
        return d2.argmin(axis=1).astype(np.int64)


def patch_descriptor(patch: np.ndarray) -> np.ndarray:
    """(p, p, 3) -> 4x4 sub-cell RGB means flattened to 48 values."""
    p = patch.shape[0]
    if p % DESCRIPTOR_CELLS:
        raise ValueError(f"patch size {p} must be divisible by {DESCRIPTOR_CELLS}")
    s = p // DESCRIPTOR_CELLS
    cells = patch.reshape(DESCRIPTOR_CELLS, s, DESCRIPTOR_CELLS, s, 3).mean(axis=(1, 3))
    return cells.reshape(-1)


def frame_descriptors(frames: np.ndarray, patch: int) -> np.ndarray:
    """All patch descriptors of (T, H, W, 3) frames, canonical order."""
    t, h, w = frames.shape[:3]
    gh, gw = h // patch, w // patch
    out = np.empty((t * gh * gw, DESCRIPTOR_CELLS * DESCRIPTOR_CELLS * 3))
    i = 0
    for ti in range(t):
        for r in range(gh):
            for c in range(gw):
                out[i] = patch_descriptor(
                    frames[ti, r * patch : (r + 1) * patch, c * patch : (c + 1) * patch]
                )
                i += 1
    return out


def build_codebook(frames_list: list[np.ndarray], patch: int, k: int, seed: int) -> Codebook:
    """Fit k-means (seeded init, fixed iteration count) over patch descriptors."""
    if k < 2:
        raise DegenerateCodebookError("codebook needs at least 2 entries")
    if not frames_list:
        raise DegenerateCodebookError("empty descriptor sample")
    descriptors = np.concatenate([frame_descriptors(f, patch) for f in frames_list])
    unique = np.unique(descriptors, axis=0)
    if unique.shape[0] < k:
        raise DegenerateCodebookError(
            f"only {unique.shape[0]} distinct descriptors for K={k}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
    centroids = unique[rng.choice(unique.shape[0], size=k, replace=False)].copy()
    for _ in range(KMEANS_ITERATIONS):
        d2 = ((descriptors[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        assign = d2.argmin(axis=1)
        for j in range(k):
            members = descriptors[assign == j]
            if members.shape[0]:
                centroids[j] = members.mean(axis=0)
    if np.unique(centroids, axis=0).shape[0] < k:
        raise DegenerateCodebookError("k-means collapsed to duplicate centroids")
    return Codebook(centroids)


def quantize(frames: np.ndarray, mask: np.ndarray, codebook: Codebook) -> TargetTensor:
    """Nearest-centroid class id for every masked patch."""
    t, h = frames.shape[0], frames.shape[1]
    patch = h // mask.shape[1]
    pos = masked_positions(mask)
    descriptors = np.stack(
        [
            patch_descriptor(frames[ti, r * patch : (r + 1) * patch, c * patch : (c + 1) * patch])
            for ti, r, c in pos
        ]
    ) if pos.shape[0] else np.zeros((0, DESCRIPTOR_CELLS * DESCRIPTOR_CELLS * 3))
    ids = codebook.assign(descriptors) if pos.shape[0] else np.zeros(0, dtype=np.int64)
    return TargetTensor(TargetKind.VQ, pos, ids=ids, loss_kind="ce")


def save_codebook(codebook: Codebook, path: Path) -> None:
    payload = {
        "k": codebook.size,
        "dim": codebook.centroids.shape[1],
        "centroids": codebook.centroids.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_codebook(path: Path) -> Codebook:
    payload = json.loads(Path(path).read_text())
    return Codebook(np.array(payload["centroids"], dtype=np.float64))
