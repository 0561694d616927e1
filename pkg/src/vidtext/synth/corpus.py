"""Corpus construction and on-disk layout.

A corpus is fully determined by its config: clip i is regenerated on demand
from the seed sequence (config.seed, i), so only the scene descriptions are
held in memory.  The persisted layout is one directory per clip with frames
as PNGs plus a JSON sidecar, and a top-level manifest:

    corpus_dir/
      manifest.json            # config, clip ids, splits, vocabulary
      <clip_id>/
        frame_000.png ...      # lossless 8-bit frames
        clip.json              # caption, gt_flow, gt_depth
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import InvalidConfigError
from .scene import AnnotatedClip, SceneSpec, caption_for_scene, generate_clip, random_scene
from .text import Vocabulary, detokenize, tokenize


@dataclass(frozen=True)
class CorpusConfig:
    size: int
    train_fraction: float = 0.9
    seed: int = 0
    canvas_size: int = 64
    frame_count: int = 32
    min_objects: int = 1
    max_objects: int = 2
    distinct_captions: bool = True

    def validate(self) -> None:
        if self.size < 2:
            raise InvalidConfigError("corpus size must be >= 2")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfigError("train_fraction must be in (0, 1)")
        if self.min_objects < 0 or self.max_objects < self.min_objects:
            raise InvalidConfigError("object count range is empty")


class Corpus:
    """Lazy clip store with disjoint train/val splits and a shared vocabulary."""

    def __init__(self, config: CorpusConfig, scenes: list[SceneSpec]):
        self.config = config
        self.scenes = scenes
        n_train = int(round(config.size * config.train_fraction))
        n_train = min(max(n_train, 1), config.size - 1)
        self.train_ids = list(range(n_train))
        self.val_ids = list(range(n_train, config.size))
        self.vocab = Vocabulary.from_texts([caption_for_scene(s) for s in scenes])

    def __len__(self) -> int:
        return len(self.scenes)

    @property
    def clip_ids(self) -> list[str]:
        return [s.clip_id for s in self.scenes]

    def caption(self, index: int) -> str:
        return caption_for_scene(self.scenes[index])

    def caption_ids(self, index: int) -> list[int]:
        return tokenize(self.caption(index), self.vocab)

    def clip(self, index: int) -> AnnotatedClip:
        return generate_clip(self.scenes[index])


def build_corpus(config: CorpusConfig) -> Corpus:
    """Sample scenes deterministically; with distinct_captions (the default)
    scene draws are retried until every caption is unique, keeping matching
    and retrieval well-posed on small corpora."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, config.size]))
    scenes, seen = [], set()
    for i in range(config.size):
        n_obj = int(rng.integers(config.min_objects, config.max_objects + 1))
        for _ in range(500):
            child_seed = int(rng.integers(0, 2**31 - 1))
            scene = random_scene(
                canvas_size=config.canvas_size,
                num_objects=n_obj,
                frame_count=config.frame_count,
                seed=child_seed,
                clip_id=f"clip-{config.seed:04d}-{i:05d}",
            )
            caption = caption_for_scene(scene)
            if not config.distinct_captions or caption not in seen:
                break
        else:
            raise InvalidConfigError(
                f"could not draw {config.size} distinct captions; reduce size or widen the scene space"
            )
        seen.add(caption)
        scenes.append(scene)
    corpus = Corpus(config, scenes)
    for i in range(len(corpus)):
        detokenize(corpus.caption_ids(i), corpus.vocab)  # coverage check, raises on OOV
    return corpus


def _frames_to_uint8(frames: np.ndarray) -> np.ndarray:
    return np.round(frames * 255.0).astype(np.uint8)


def save_clip(clip: AnnotatedClip, clip_dir: Path) -> None:
    clip_dir.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(_frames_to_uint8(clip.frames)):
        Image.fromarray(frame).save(clip_dir / f"frame_{t:03d}.png")
    sidecar = {
        "clip_id": clip.clip_id,
        "caption": clip.caption,
        "gt_flow": clip.gt_flow.tolist(),
        "gt_depth": clip.gt_depth.tolist(),
    }
    (clip_dir / "clip.json").write_text(json.dumps(sidecar))


def load_clip(clip_dir: Path) -> AnnotatedClip:
    sidecar = json.loads((clip_dir / "clip.json").read_text())
    frame_paths = sorted(clip_dir.glob("frame_*.png"))
    frames = np.stack(
        [np.asarray(Image.open(p), dtype=np.float64) / 255.0 for p in frame_paths]
    )
    return AnnotatedClip(
        frames=frames,
        gt_flow=np.array(sidecar["gt_flow"], dtype=np.float64),
        gt_depth=np.array(sidecar["gt_depth"], dtype=np.float64),
        caption=sidecar["caption"],
        clip_id=sidecar["clip_id"],
    )


def save_corpus(corpus: Corpus, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(len(corpus)):
        save_clip(corpus.clip(i), out_dir / corpus.clip_ids[i])
    manifest = {
        "config": asdict(corpus.config),
        "seed": corpus.config.seed,
        "clip_ids": corpus.clip_ids,
        "train_ids": corpus.train_ids,
        "val_ids": corpus.val_ids,
        "vocabulary": corpus.vocab.id_to_token,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_corpus_manifest(corpus_dir: Path) -> dict:
    return json.loads((Path(corpus_dir) / "manifest.json").read_text())
