"""Task adapters: text-to-video retrieval, QA-as-MLM, causal captioning.

Retrieval scores a video-text pair with a scalar head on the fused CLS slot
(the pre-training matching head zero-shot, or its copy once finetuning
starts).  Both QA flavors reuse the MLM head at an appended ``[MASK]`` slot:
multiple choice concatenates the question with every option and restricts the
argmax to the answer-index tokens, open-ended predicts over the full
vocabulary, and fill-in-the-blank swaps ``[BLANK]`` for ``[MASK]``.
Captioning decodes greedily under a causal text mask, appending one masked
slot per step until ``[SEP]`` or the step cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidInstanceError
from .masking import MlmCorruption, mlm_corrupt
from .model.core import VideoTextModel
from .objectives import mlm_loss
from .synth.corpus import Corpus
from .synth.sampling import sample_frames
from .synth.text import Vocabulary, tokenize

MAX_CAPTION_STEPS = 50


# ------------------------------------------------------------------ retrieval


@dataclass
class RetrievalIndex:
    query_ids: list[str]
    candidate_ids: list[str]
    scores: np.ndarray  # (queries, candidates)
    positives: list[int]  # index of the true candidate per query

    def __post_init__(self):
        if self.scores.shape != (len(self.query_ids), len(self.candidate_ids)):
            raise ValueError("score matrix shape does not match id lists")
        if len(self.positives) != len(self.query_ids):
            raise ValueError("one positive per query required")


def _to_tensor(frames: np.ndarray, dtype) -> torch.Tensor:
    return torch.as_tensor(frames, dtype=dtype)[None]


@torch.no_grad()
def retrieval_score(
    model: VideoTextModel,
    frames: np.ndarray,
    tokens: list[int],
    head: str = "vtm",
) -> float:
    """Scalar match score of one video-text pair; higher is better."""
    dtype = next(model.parameters()).dtype
    v = model.video_encode(_to_tensor(frames, dtype))
    w = model.embed_text(torch.as_tensor(tokens, dtype=torch.long)[None])
    fused = model.cross_fuse(v, w)
    logit = model.t2v_logit(fused.h_c) if head == "t2v" else model.vtm_logit(fused.h_c)
    return float(logit[0])


@torch.no_grad()
def score_matrix(
    model: VideoTextModel,
    videos: list[np.ndarray],
    texts: list[list[int]],
    head: str = "vtm",
) -> np.ndarray:
    """(texts x videos) score matrix; each pair is scored independently."""
    dtype = next(model.parameters()).dtype
    encoded = [model.video_encode(_to_tensor(f, dtype)) for f in videos]
    out = np.zeros((len(texts), len(videos)))
    for qi, tokens in enumerate(texts):
        w = model.embed_text(torch.as_tensor(tokens, dtype=torch.long)[None])
        for ci, v in enumerate(encoded):
            fused = model.cross_fuse(v, w)
            logit = model.t2v_logit(fused.h_c) if head == "t2v" else model.vtm_logit(fused.h_c)
            out[qi, ci] = float(logit[0])
    return out


def mc_as_video_to_text(
    model: VideoTextModel, frames: np.ndarray, options: list[list[int]], head: str = "vtm"
) -> int:
    """Answer a multiple-choice instance as video-to-text retrieval.

    The video is the query and the candidate captions are ranked by the
    matching score; ties break toward the lower option index.
    """
    scores = score_matrix(model, [frames], options, head=head)[:, 0]
    return int(np.argmax(scores))


def recall_at_k(index: RetrievalIndex, k: int) -> float:
    """Fraction of queries whose positive ranks in the top k (ties by index)."""
    n_candidates = index.scores.shape[1]
    if not 1 <= k <= n_candidates:
        raise ValueError(f"k={k} out of range for {n_candidates} candidates")
    hits = 0
    for qi, positive in enumerate(index.positives):
        row = index.scores[qi]
        order = sorted(range(n_candidates), key=lambda c: (-row[c], c))
        if positive in order[:k]:
            hits += 1
    return hits / len(index.positives)


# ------------------------------------------------------------------------- QA


@dataclass
class QaInstance:
    frames: np.ndarray  # (T, H, W, 3) eval-sampled view
    question: list[int]
    options: list[list[int]] | None  # token sequences for multiple choice
    answer: int | str  # option index (mc) or answer token (open / fib)
    instance_id: str = ""

    def __post_init__(self):
        if self.options is not None:
            if not 1 <= len(self.options) <= 5:
                raise InvalidInstanceError("multiple choice supports 1..5 options")
            if not isinstance(self.answer, int) or not 0 <= self.answer < len(self.options):
                raise InvalidInstanceError("answer index out of option range")


def format_qa_tokens(instance: QaInstance, vocab: Vocabulary) -> list[int]:
    """Build the text input: question (+ options for mc) + [MASK].

    Fill-in-the-blank questions carry a [BLANK] token which is replaced by
    [MASK] in place instead of appending one.
    """
    tokens = list(instance.question)
    if instance.options is not None:
        for option in instance.options:
            tokens.extend(option)
        tokens.append(vocab.mask_id)
        return tokens
    if vocab.blank_id in tokens:
        return [vocab.mask_id if t == vocab.blank_id else t for t in tokens]
    tokens.append(vocab.mask_id)
    return tokens


def restricted_argmax(logits: np.ndarray, option_ids: list[int]) -> int:
    """Index of the best-scoring option id; other vocabulary entries are ignored."""
    return int(np.argmax([logits[i] for i in option_ids]))


@torch.no_grad()
def qa_logits(model: VideoTextModel, instance: QaInstance, vocab: Vocabulary) -> np.ndarray:
    tokens = format_qa_tokens(instance, vocab)
    if tokens.count(vocab.mask_id) != 1:
        raise InvalidInstanceError("instance must format to exactly one [MASK] slot")
    slot = tokens.index(vocab.mask_id)
    dtype = next(model.parameters()).dtype
    v = model.video_encode(_to_tensor(instance.frames, dtype))
    w = model.embed_text(torch.as_tensor(tokens, dtype=torch.long)[None])
    fused = model.cross_fuse(v, w)
    return model.mlm_logits(fused.h_x[:, slot])[0].double().numpy()


def qa_answer(model: VideoTextModel, instance: QaInstance, vocab: Vocabulary) -> int | str:
    """Predicted option index (mc) or vocabulary token (open-ended / fib)."""
    logits = qa_logits(model, instance, vocab)
    if instance.options is not None:
        return restricted_argmax(logits, vocab.answer_ids(len(instance.options)))
    return vocab.id_to_token[int(np.argmax(logits))]


def qa_finetune_loss(
    model: VideoTextModel, instance: QaInstance, vocab: Vocabulary
) -> torch.Tensor:
    """Cross-entropy at the [MASK] slot against the true answer token."""
    tokens = format_qa_tokens(instance, vocab)
    slot = tokens.index(vocab.mask_id)
    if instance.options is not None:
        answer_id = vocab.answer_ids(len(instance.options))[instance.answer]
    else:
        answer_id = vocab.id(str(instance.answer))
    dtype = next(model.parameters()).dtype
    v = model.video_encode(_to_tensor(instance.frames, dtype))
    w = model.embed_text(torch.as_tensor(tokens, dtype=torch.long)[None])
    fused = model.cross_fuse(v, w)
    labels = torch.full((1, len(tokens)), -1, dtype=torch.long)
    labels[0, slot] = answer_id
    loss, _ = mlm_loss(fused.h_x, labels, model.mlm_head)
    return loss


def make_qa_instances(
    corpus: Corpus,
    mode: str,
    clip_indices: list[int],
    seed: int,
    num_options: int = 5,
    frame_count: int = 4,
    crop: int | None = None,
) -> list[QaInstance]:
    """Synthesize QA instances from corpus scenes.

    mc:   "which caption matches" with one true caption among distractors
    open: "what color is the <shape>" about the nearest object
    fib:  the caption with one word blanked out
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(clip_indices)]))
    vocab = corpus.vocab
    instances = []
    for idx in clip_indices:
        clip = corpus.clip(idx)
        count = min(frame_count, clip.frames.shape[0])
        frames = sample_frames(clip, count, mode="eval", crop=crop).frames
        if mode == "mc":
            distract_pool = [j for j in range(len(corpus)) if j != idx]
            k = min(num_options - 1, len(distract_pool))
            chosen = list(rng.choice(distract_pool, size=k, replace=False))
            options = [corpus.caption_ids(j) for j in chosen]
            answer = int(rng.integers(0, len(options) + 1))
            options.insert(answer, corpus.caption_ids(idx))
            question = tokenize("which caption matches", vocab)
            instances.append(QaInstance(frames, question, options, answer, clip.clip_id))
        elif mode == "open":
            scene = corpus.scenes[idx]
            if not scene.objects:
                continue
            obj = min(scene.objects, key=lambda o: o.depth_rank)
            question = tokenize(f"what color is the {obj.shape}", vocab)
            instances.append(QaInstance(frames, question, None, obj.color, clip.clip_id))
        elif mode == "fib":
            words = corpus.caption(idx).split()
            maskable = [i for i, word in enumerate(words) if word not in ("the", "and")]
            pick = int(rng.choice(maskable))
            answer = words[pick]
            words[pick] = "[BLANK]"
            question = tokenize(" ".join(words), vocab)
            instances.append(QaInstance(frames, question, None, answer, clip.clip_id))
        else:
            raise ValueError(f"unknown qa mode {mode!r}")
    return instances


# ------------------------------------------------------------------ captioning


@torch.no_grad()
def caption_generate(
    model: VideoTextModel,
    frames: np.ndarray,
    vocab: Vocabulary,
    max_steps: int = MAX_CAPTION_STEPS,
) -> list[int]:
    """Greedy decoding: append [MASK], predict, stop at [SEP] or the cap.

    The causal text mask keeps video and CLS blind to text, so the parallel
    forward at step t equals a fresh forward on the prefix; [SEP] is excluded
    from the returned ids.
    """
    dtype = next(model.parameters()).dtype
    v = model.video_encode(_to_tensor(frames, dtype))
    generated: list[int] = []
    for _ in range(max_steps):
        tokens = torch.as_tensor(generated + [vocab.mask_id], dtype=torch.long)[None]
        w = model.embed_text(tokens)
        fused = model.cross_fuse(v, w, causal_text=True)
        next_id = int(model.mlm_logits(fused.h_x[:, -1]).argmax())
        if next_id == vocab.sep_id:
            break
        generated.append(next_id)
    return generated


def caption_corruption(caption_ids: list[int], vocab: Vocabulary, seed: int, ratio: float = 0.15) -> MlmCorruption:
    """Corrupt caption + [SEP]; the stop token is maskable like any word."""
    return mlm_corrupt(
        list(caption_ids) + [vocab.sep_id], vocab, seed=seed, ratio=ratio, protect_specials=False
    )


def caption_finetune_loss(
    model: VideoTextModel,
    frames: np.ndarray,
    caption_ids: list[int],
    vocab: Vocabulary,
    seed: int,
    ratio: float = 0.15,
    causal: bool = True,
) -> tuple[torch.Tensor, int]:
    """MLM loss over a corrupted caption under the causal text mask."""
    corruption = caption_corruption(caption_ids, vocab, seed, ratio)
    dtype = next(model.parameters()).dtype
    v = model.video_encode(_to_tensor(frames, dtype))
    w = model.embed_text(torch.as_tensor(corruption.tokens, dtype=torch.long)[None])
    fused = model.cross_fuse(v, w, causal_text=causal)
    labels = torch.as_tensor(corruption.labels, dtype=torch.long)[None]
    return mlm_loss(fused.h_x, labels, model.mlm_head)


def caption_metrics(predictions: list[list[int]], references: list[list[int]]) -> dict:
    """Exact-sequence and per-token accuracy over aligned positions."""
    if len(predictions) != len(references):
        raise ValueError("prediction/reference count mismatch")
    exact = sum(p == r for p, r in zip(predictions, references))
    token_hits = token_total = 0
    for p, r in zip(predictions, references):
        token_total += max(len(p), len(r))
        token_hits += sum(a == b for a, b in zip(p, r))
    return {
        "exact_accuracy": exact / len(predictions) if predictions else 0.0,
        "token_accuracy": token_hits / token_total if token_total else 0.0,
    }
