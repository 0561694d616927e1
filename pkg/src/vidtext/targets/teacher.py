"""Frozen feature teachers for distillation targets.

A teacher is a deterministic frames -> per-patch feature function whose
parameters never change after construction.  The built-in teachers are small
seeded random MLPs over patch pixels: the per-frame variants stand in for
image backbones (spatial and multimodal flavors differ only in their seeds),
the video variant pools space-time cubes of ``cube_frames`` consecutive
frames and broadcasts one feature to every member patch.

Teacher features are standardized per target row (mean 0, variance 1 across
channels) before use; constant rows make normalization undefined and raise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import DegenerateTargetError, InvalidTeacherError
from .kinds import TargetKind, TargetTensor, masked_positions

TEACHER_ARITY = {
    TargetKind.SIF: "image",
    TargetKind.TVF: "video",
    TargetKind.MMF: "multimodal-image",
}
_KIND_SEED_SALT = {TargetKind.SIF: 11, TargetKind.TVF: 22, TargetKind.MMF: 33}


@dataclass(frozen=True)
class Teacher:
    name: str
    arity: str  # "image" | "video" | "multimodal-image"
    patch_size: int
    feature_dim: int
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)  # frames -> (T, Gh, Gw, F)
    params: dict = field(default_factory=dict, repr=False)
    cube_frames: int = 1

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        return self.fn(frames)


def _patch_matrix(frames: np.ndarray, patch: int) -> np.ndarray:
    """(T, H, W, 3) -> (T, Gh, Gw, patch*patch*3)."""
    t, h, w, c = frames.shape
    gh, gw = h // patch, w // patch
    x = frames.reshape(t, gh, patch, gw, patch, c)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(t, gh, gw, patch * patch * c)


def make_frozen_teacher(
    kind: TargetKind | str,
    patch_size: int,
    feature_dim: int = 16,
    seed: int = 0,
    hidden: int = 32,
    cube_frames: int = 2,
) -> Teacher:
    """Seeded random tanh MLP over patch pixels, frozen by construction."""
    kind = TargetKind(kind)
    if kind not in TEACHER_ARITY:
        raise InvalidTeacherError(f"{kind.value} is not a teacher-backed target")
    if feature_dim < 2:
        raise InvalidTeacherError("teacher features need at least 2 channels")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _KIND_SEED_SALT[kind]]))
    in_dim = patch_size * patch_size * 3
    params = {
        "w1": rng.standard_normal((in_dim, hidden)) / np.sqrt(in_dim),
        "b1": rng.standard_normal(hidden) * 0.1,
        "w2": rng.standard_normal((hidden, feature_dim)) / np.sqrt(hidden),
        "b2": rng.standard_normal(feature_dim) * 0.1,
    }

    def mlp(x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ params["w1"] + params["b1"]) @ params["w2"] + params["b2"]

    arity = TEACHER_ARITY[kind]

    def image_fn(frames: np.ndarray) -> np.ndarray:
        return mlp(_patch_matrix(frames, patch_size))

    def video_fn(frames: np.ndarray) -> np.ndarray:
        x = _patch_matrix(frames, patch_size)
        t = x.shape[0]
        out = np.empty(x.shape[:3] + (feature_dim,))
        for start in range(0, t, cube_frames):
            cube = x[start : start + cube_frames].mean(axis=0)
            out[start : start + cube_frames] = mlp(cube)[None]
        return out

    return Teacher(
        name=f"{kind.value}-teacher-{seed}",
        arity=arity,
        patch_size=patch_size,
        feature_dim=feature_dim,
        fn=video_fn if arity == "video" else image_fn,
        params=params,
        cube_frames=cube_frames if arity == "video" else 1,
    )


def target_teacher(
    frames: np.ndarray,
    mask: np.ndarray,
    teacher: Teacher,
    kind: TargetKind | str,
    loss_kind: str = "l1",
    eps: float = 1e-12,
) -> TargetTensor:
    """Standardized teacher features of each masked patch."""
    kind = TargetKind(kind)
    if TEACHER_ARITY.get(kind) != teacher.arity:
        raise InvalidTeacherError(
            f"teacher arity {teacher.arity!r} does not serve target kind {kind.value!r}"
        )
    h = frames.shape[1]
    if h % teacher.patch_size or h // teacher.patch_size != mask.shape[1]:
        raise InvalidTeacherError("teacher grid does not map 1:1 onto the patch grid")
    feats = teacher(frames)
    if feats.shape[:3] != mask.shape:
        raise InvalidTeacherError(
            f"teacher produced grid {feats.shape[:3]}, expected {mask.shape}"
        )
    pos = masked_positions(mask)
    rows = feats[pos[:, 0], pos[:, 1], pos[:, 2]] if pos.shape[0] else np.zeros((0, teacher.feature_dim))
    std = rows.std(axis=1, keepdims=True)
    if pos.shape[0] and (std < eps).any():
        raise DegenerateTargetError("constant teacher feature row: normalization undefined")
    rows = (rows - rows.mean(axis=1, keepdims=True)) / std if pos.shape[0] else rows
    return TargetTensor(
        kind,
        pos,
        values=rows,
        loss_kind=loss_kind,
        normalization={"method": "per-row standardize", "eps": eps},
    )


def save_teacher(teacher: Teacher, path: Path) -> None:
    payload = {
        "name": teacher.name,
        "arity": teacher.arity,
        "patch_size": teacher.patch_size,
        "feature_dim": teacher.feature_dim,
        "cube_frames": teacher.cube_frames,
        "params": {k: v.tolist() for k, v in teacher.params.items()},
    }
    Path(path).write_text(json.dumps(payload))


def load_teacher(path: Path) -> Teacher:
    payload = json.loads(Path(path).read_text())
    params = {k: np.array(v, dtype=np.float64) for k, v in payload["params"].items()}

    def mlp(x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ params["w1"] + params["b1"]) @ params["w2"] + params["b2"]

    patch_size = payload["patch_size"]
    feature_dim = payload["feature_dim"]
    cube_frames = payload["cube_frames"]

    def image_fn(frames: np.ndarray) -> np.ndarray:
        return mlp(_patch_matrix(frames, patch_size))

    def video_fn(frames: np.ndarray) -> np.ndarray:
        x = _patch_matrix(frames, patch_size)
        out = np.empty(x.shape[:3] + (feature_dim,))
        for start in range(0, x.shape[0], cube_frames):
            cube = x[start : start + cube_frames].mean(axis=0)
            out[start : start + cube_frames] = mlp(cube)[None]
        return out

    return Teacher(
        name=payload["name"],
        arity=payload["arity"],
        patch_size=patch_size,
        feature_dim=feature_dim,
        fn=video_fn if payload["arity"] == "video" else image_fn,
        params=params,
        cube_frames=cube_frames,
    )
