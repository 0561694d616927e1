"""Patch-grid masking strategies and word-token corruption.

Three strategies over the (T, Gh, Gw) patch grid:

* random: exactly ``ceil(p_m * N)`` patches, uniform without replacement
* blockwise: random cuboids (each axis uniform on 1..min(3, dim)) stamped
  until the realized ratio exceeds p_m; the sampled blocks are recorded so a
  mask can be replayed from its provenance
* attended: top-k patches and tokens by CLS attention score from an intact
  forward pass, per modality, ties broken by lowest flat index

Strategy mixing draws one strategy per sample i.i.d.  MLM corruption selects
tokens with independent Bernoulli(ratio) and applies the 80/10/10
mask/random/keep replacement rule; a kept token still carries a label.
All functions are pure in (inputs, seed).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .synth.text import Vocabulary

MAX_BLOCK_EDGE = 3


@dataclass
class PatchMask:
    mask: np.ndarray  # (T, Gh, Gw) bool
    strategy: str  # "random" | "blockwise" | "attended"
    seed: int | None = None
    blocks: list[tuple[int, int, int, int, int, int]] = field(default_factory=list)
    # each block: (t0, r0, c0, dt, dr, dc)

    @property
    def realized_ratio(self) -> float:
        return float(self.mask.sum()) / self.mask.size

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def _check_ratio(p_m: float) -> None:
    if not 0.0 < p_m < 1.0:
        raise ValueError(f"masking ratio must be in (0, 1), got {p_m}")


def random_mask(grid_shape: tuple[int, int, int], p_m: float, seed: int) -> PatchMask:
    """Mask exactly ceil(p_m * N) patches, uniformly without replacement."""
    _check_ratio(p_m)
    n = int(np.prod(grid_shape))
    k = int(np.ceil(p_m * n))
    rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
    chosen = rng.choice(n, size=k, replace=False)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    return PatchMask(mask.reshape(grid_shape), "random", seed=seed)


def blockwise_mask(
    grid_shape: tuple[int, int, int], p_m: float, seed: int, max_edge: int = MAX_BLOCK_EDGE
) -> PatchMask:
    """Stamp random cuboids until the realized ratio is strictly above p_m."""
    _check_ratio(p_m)
    t, gh, gw = grid_shape
    rng = np.random.default_rng(np.random.SeedSequence([seed, t, gh, gw]))
    mask = np.zeros(grid_shape, dtype=bool)
    blocks = []
    n = mask.size
    while mask.sum() / n <= p_m:
        dt = int(rng.integers(1, min(max_edge, t) + 1))
        dr = int(rng.integers(1, min(max_edge, gh) + 1))
        dc = int(rng.integers(1, min(max_edge, gw) + 1))
        t0 = int(rng.integers(0, t - dt + 1))
        r0 = int(rng.integers(0, gh - dr + 1))
        c0 = int(rng.integers(0, gw - dc + 1))
        mask[t0 : t0 + dt, r0 : r0 + dr, c0 : c0 + dc] = True
        blocks.append((t0, r0, c0, dt, dr, dc))
    return PatchMask(mask, "blockwise", seed=seed, blocks=blocks)


def max_block_size(grid_shape: tuple[int, int, int], max_edge: int = MAX_BLOCK_EDGE) -> int:
    t, gh, gw = grid_shape
    return min(max_edge, t) * min(max_edge, gh) * min(max_edge, gw)


def replay_blocks(grid_shape: tuple[int, int, int], blocks) -> np.ndarray:
    mask = np.zeros(grid_shape, dtype=bool)
    for t0, r0, c0, dt, dr, dc in blocks:
        mask[t0 : t0 + dt, r0 : r0 + dr, c0 : c0 + dc] = True
    return mask


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the k highest scores, ties to the lowest flat index."""
    flat = scores.reshape(-1)
    order = np.lexsort((np.arange(flat.size), -flat))  # by -score, then index
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(scores.shape)


def attended_mask(
    video_scores: np.ndarray, text_scores: np.ndarray, p_m: float
) -> tuple[PatchMask, np.ndarray]:
    """Mask the ceil(p_m * N) most-attended patches and ceil(p_m * L) tokens.

    Scores must come from an intact (unmasked) forward pass; each modality is
    ranked separately.
    """
    _check_ratio(p_m)
    if (video_scores < 0).any() or (text_scores < 0).any():
        raise ValueError("attention scores must be nonnegative")
    k_patches = int(np.ceil(p_m * video_scores.size))
    k_tokens = int(np.ceil(p_m * text_scores.size)) if text_scores.size else 0
    patch = PatchMask(_top_k(video_scores, k_patches), "attended")
    token_mask = (
        _top_k(text_scores, k_tokens) if text_scores.size else np.zeros(0, dtype=bool)
    )
    return patch, token_mask


def mix_strategies(strategies: list[str], batch_size: int, seed: int) -> list[str]:
    """I.i.d. uniform strategy choice per sample."""
    if not strategies:
        raise ValueError("strategy list must be nonempty")
    rng = np.random.default_rng(np.random.SeedSequence([seed, batch_size, len(strategies)]))
    return [strategies[int(i)] for i in rng.integers(0, len(strategies), size=batch_size)]


@dataclass
class MlmCorruption:
    tokens: np.ndarray  # corrupted ids, (L,)
    labels: np.ndarray  # original ids where selected, -1 elsewhere, (L,)
    mask: np.ndarray  # (L,) bool, True where a label is defined

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def _apply_replacement(
    tokens: np.ndarray, selected: np.ndarray, vocab: Vocabulary, rng: np.random.Generator
) -> MlmCorruption:
    corrupted = tokens.copy()
    labels = np.full(tokens.shape, -1, dtype=np.int64)
    labels[selected] = tokens[selected]
    positions = np.flatnonzero(selected)
    rolls = rng.random(positions.size)
    corrupted[positions[rolls < 0.8]] = vocab.mask_id
    to_random = positions[(rolls >= 0.8) & (rolls < 0.9)]
    if to_random.size:
        regular_ids = np.array(
            [i for i in range(len(vocab)) if i not in vocab.special_ids], dtype=np.int64
        )
        corrupted[to_random] = regular_ids[rng.integers(regular_ids.size, size=to_random.size)]
    # rolls >= 0.9 keep the original token; the label still applies there
    return MlmCorruption(corrupted, labels, selected)


def mlm_corrupt(
    tokens: np.ndarray | list[int],
    vocab: Vocabulary,
    seed: int,
    ratio: float = 0.15,
    protect_specials: bool = True,
) -> MlmCorruption:
    """BERT-style corruption; special tokens are never selected by default.

    Captioning passes ``protect_specials=False`` so the appended sentence-end
    token can be masked and supervised like any word.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"corruption ratio must be in [0, 1), got {ratio}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, tokens.size]))
    eligible = (
        ~np.isin(tokens, list(vocab.special_ids))
        if protect_specials
        else np.ones(tokens.shape, dtype=bool)
    )
    selected = eligible & (rng.random(tokens.shape) < ratio) if ratio > 0 else np.zeros(tokens.shape, bool)
    return _apply_replacement(tokens, selected, vocab, rng)


def mlm_corrupt_at(
    tokens: np.ndarray | list[int], positions: np.ndarray, vocab: Vocabulary, seed: int
) -> MlmCorruption:
    """Corrupt a fixed position set (attended masking) with the same 80/10/10 rule."""
    tokens = np.asarray(tokens, dtype=np.int64)
    selected = np.asarray(positions, dtype=bool)
    selected = selected & ~np.isin(tokens, list(vocab.special_ids))
    rng = np.random.default_rng(np.random.SeedSequence([seed, tokens.size, 1]))
    return _apply_replacement(tokens, selected, vocab, rng)


# ------------------------------------------------------------- serialization


def mask_to_bytes(pm: PatchMask) -> bytes:
    header = {
        "shape": list(pm.mask.shape),
        "strategy": pm.strategy,
        "seed": pm.seed,
        "blocks": [list(b) for b in pm.blocks],
        "bits": base64.b64encode(np.packbits(pm.mask.reshape(-1)).tobytes()).decode(),
    }
    return json.dumps(header).encode()


def mask_from_bytes(data: bytes) -> PatchMask:
    header = json.loads(data.decode())
    shape = tuple(header["shape"])
    n = int(np.prod(shape))
    bits = np.unpackbits(
        np.frombuffer(base64.b64decode(header["bits"]), dtype=np.uint8), count=n
    )
    return PatchMask(
        mask=bits.astype(bool).reshape(shape),
        strategy=header["strategy"],
        seed=header["seed"],
        blocks=[tuple(b) for b in header["blocks"]],
    )
