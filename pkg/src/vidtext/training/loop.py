"""Pre-training, finetuning and evaluation loops.

Every run is a pure function of (config, seed): frame sampling, masking,
corruption and batch order are all derived from per-(step, sample) seed
sequences, so single-worker runs are bit-reproducible and a resumed run
continues the same trajectory.  The attended strategy triggers an extra
intact forward pass for its samples before masks are drawn.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError, InvalidConfigError
from ..masking import (
    attended_mask,
    blockwise_mask,
    mix_strategies,
    mlm_corrupt,
    mlm_corrupt_at,
    random_mask,
)
from ..model.checkpoint import (
    config_hash,
    load_meta,
    load_model,
    read_blob,
    save_model,
    write_blob,
)
from ..model.core import VideoTextModel, build_model
from ..objectives import (
    ObjectiveConfig,
    PretrainBatch,
    mlm_accuracy,
    total_loss,
    vtm_accuracy,
    vtm_loss,
)
from ..synth.corpus import Corpus, build_corpus
from ..synth.sampling import sample_frames
from ..targets.codebook import Codebook, build_codebook, load_codebook, save_codebook
from ..targets.extract import extract_targets
from ..targets.kinds import TargetKind
from ..targets.teacher import Teacher, load_teacher, make_frozen_teacher, save_teacher
from ..downstream import (
    RetrievalIndex,
    caption_finetune_loss,
    caption_generate,
    caption_metrics,
    format_qa_tokens,
    make_qa_instances,
    qa_finetune_loss,
    recall_at_k,
    restricted_argmax,
    score_matrix,
)
from .config import FINETUNE_TASKS, RunConfig
from .optim import clip_gradients, lr_at, make_optimizer, set_lr

CODEBOOK_FILE = "codebook.json"
TEACHER_FILE = "teacher_{kind}.json"


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# ------------------------------------------------------------ run instruments


@dataclass
class Instruments:
    codebook: Codebook | None = None
    teachers: dict[str, Teacher] | None = None

    def teacher_for(self, kind: TargetKind) -> Teacher | None:
        return (self.teachers or {}).get(kind.value)


def build_instruments(run_cfg: RunConfig, corpus: Corpus) -> Instruments:
    """Codebook and frozen teachers for the configured target kinds."""
    kinds = {TargetKind(k) for k in run_cfg.mvm_targets} if "mvm" in run_cfg.tasks else set()
    codebook = None
    if TargetKind.VQ in kinds:
        sample_ids = corpus.train_ids[: min(8, len(corpus.train_ids))]
        frames = [
            sample_frames(
                corpus.clip(i), run_cfg.frames_per_sample, "eval", run_cfg.effective_crop
            ).frames
            for i in sample_ids
        ]
        codebook = build_codebook(
            frames, run_cfg.model.patch_size, run_cfg.codebook_size, run_cfg.seed
        )
    teachers = {
        kind.value: make_frozen_teacher(
            kind, run_cfg.model.patch_size, run_cfg.teacher_dim, seed=run_cfg.seed
        )
        for kind in kinds
        if kind.is_teacher
    }
    return Instruments(codebook=codebook, teachers=teachers or None)


def save_instruments(instruments: Instruments, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if instruments.codebook is not None:
        save_codebook(instruments.codebook, directory / CODEBOOK_FILE)
    for kind, teacher in (instruments.teachers or {}).items():
        save_teacher(teacher, directory / TEACHER_FILE.format(kind=kind))


def load_instruments(directory: Path) -> Instruments:
    directory = Path(directory)
    codebook = None
    if (directory / CODEBOOK_FILE).exists():
        codebook = load_codebook(directory / CODEBOOK_FILE)
    teachers = {}
    for path in directory.glob("teacher_*.json"):
        kind = path.stem.removeprefix("teacher_")
        teachers[kind] = load_teacher(path)
    return Instruments(codebook=codebook, teachers=teachers or None)


# --------------------------------------------------------------- batch build


def pad_token_batch(sequences: list[list[int]], pad_id: int):
    length = max(len(s) for s in sequences)
    tokens = np.full((len(sequences), length), pad_id, dtype=np.int64)
    pad = np.ones((len(sequences), length), dtype=bool)
    for i, seq in enumerate(sequences):
        tokens[i, : len(seq)] = seq
        pad[i, : len(seq)] = False
    return tokens, pad


def assemble_batch(
    model: VideoTextModel,
    corpus: Corpus,
    indices: list[int],
    run_cfg: RunConfig,
    instruments: Instruments,
    step: int,
) -> PretrainBatch:
    """Sample, mask, corrupt and extract targets for one training step."""
    dtype = next(model.parameters()).dtype
    crop = run_cfg.effective_crop
    mvm_on = "mvm" in run_cfg.tasks and bool(run_cfg.mvm_targets)
    batch_size = len(indices)

    clips = [corpus.clip(i) for i in indices]
    samples = [
        sample_frames(
            clip, run_cfg.frames_per_sample, "train", crop,
            seed=derive_seed(run_cfg.seed, 1, step, i),
        )
        for i, clip in enumerate(clips)
    ]
    frames = torch.as_tensor(np.stack([s.frames for s in samples]), dtype=dtype)
    captions = [corpus.caption_ids(i) for i in indices]

    grid = (run_cfg.frames_per_sample, crop // run_cfg.model.patch_size, crop // run_cfg.model.patch_size)
    patch_masks: list[np.ndarray | None] = [None] * batch_size
    token_masks: list[np.ndarray | None] = [None] * batch_size

    if mvm_on:
        strategies = mix_strategies(list(run_cfg.masking), batch_size, derive_seed(run_cfg.seed, 2, step))
        attended_ids = [i for i, s in enumerate(strategies) if s == "attended"]
        if attended_ids:
            with torch.no_grad():
                tok, pad = pad_token_batch([captions[i] for i in attended_ids], corpus.vocab.pad_id)
                trace = model.attention_trace(
                    model.video_encode(frames[attended_ids]),
                    model.embed_text(torch.as_tensor(tok)),
                    text_pad=torch.as_tensor(pad),
                )
            for j, i in enumerate(attended_ids):
                length = len(captions[i])
                pm, tm = attended_mask(
                    trace.video[j].double().numpy(),
                    trace.text[j, :length].double().numpy(),
                    run_cfg.mask_ratio,
                )
                patch_masks[i], token_masks[i] = pm.mask, tm
        for i, strategy in enumerate(strategies):
            mask_seed = derive_seed(run_cfg.seed, 3, step, i)
            if strategy == "random":
                patch_masks[i] = random_mask(grid, run_cfg.mask_ratio, mask_seed).mask
            elif strategy == "blockwise":
                patch_masks[i] = blockwise_mask(grid, run_cfg.mask_ratio, mask_seed).mask

    corruptions = []
    for i, caption in enumerate(captions):
        corrupt_seed = derive_seed(run_cfg.seed, 4, step, i)
        if token_masks[i] is not None:
            corruptions.append(mlm_corrupt_at(caption, token_masks[i], corpus.vocab, corrupt_seed))
        else:
            corruptions.append(mlm_corrupt(caption, corpus.vocab, corrupt_seed, run_cfg.mlm_ratio))

    tokens, pad = pad_token_batch([list(c.tokens) for c in corruptions], corpus.vocab.pad_id)
    labels = np.full(tokens.shape, -1, dtype=np.int64)
    for i, c in enumerate(corruptions):
        labels[i, : c.labels.size] = c.labels

    targets = {}
    if mvm_on:
        for kind_name in run_cfg.mvm_targets:
            kind = TargetKind(kind_name)
            targets[kind_name] = [
                extract_targets(
                    kind,
                    patch_masks[i],
                    sample=samples[i],
                    clip=clips[i],
                    codebook=instruments.codebook,
                    teacher=instruments.teacher_for(kind),
                    loss_kind=None if kind.is_discrete else run_cfg.mvm_loss,
                    hog_bins=run_cfg.hog_bins,
                    hog_cell=run_cfg.hog_cell,
                )
                for i in range(batch_size)
            ]

    # a negative is a text from a different video: same-caption samples
    # (duplicate clips in multi-view batches) are never negatives, and every
    # anchor gets the same count so the pairs batch stays rectangular
    neg_rng = np.random.default_rng(derive_seed(run_cfg.seed, 5, step))
    pools = [
        [j for j in range(batch_size) if captions[j] != captions[i]] for i in range(batch_size)
    ]
    count = min((len(p) for p in pools), default=0)
    if run_cfg.num_negatives is not None:
        count = min(count, run_cfg.num_negatives)
    negatives = []
    for pool in pools:
        if count == 0:
            negatives.append([])
        elif len(pool) == count:
            negatives.append(pool)
        else:
            negatives.append(sorted(neg_rng.choice(pool, size=count, replace=False).tolist()))

    return PretrainBatch(
        frames=frames,
        patch_masks=torch.as_tensor(np.stack(patch_masks)) if mvm_on else None,
        tokens=torch.as_tensor(tokens),
        mlm_labels=torch.as_tensor(labels),
        text_pad=torch.as_tensor(pad),
        targets=targets,
        negatives=negatives,
        is_image=run_cfg.frames_per_sample == 1,
    )


def epoch_order(train_ids: list[int], epoch: int, seed: int) -> list[int]:
    rng = np.random.default_rng(derive_seed(seed, 6, epoch))
    return [train_ids[i] for i in rng.permutation(len(train_ids))]


# ------------------------------------------------------------------- pretrain


@dataclass
class RunResult:
    checkpoint_dir: str
    log_path: str
    steps: int
    final_report: dict
    config_hash: str


def _objective_config(run_cfg: RunConfig) -> ObjectiveConfig:
    return ObjectiveConfig(
        tasks=tuple(run_cfg.tasks),
        mvm_kinds=tuple(run_cfg.mvm_targets),
        loss_kind=run_cfg.mvm_loss,
        mvm_on_image_data=run_cfg.mvm_on_image_data,
        num_negatives=run_cfg.num_negatives,
    )


def _save_optimizer(optimizer, model, directory: Path) -> None:
    name_of = {id(p): n for n, p in model.named_parameters()}
    arrays = {}
    for p, state in optimizer.state.items():
        prefix = name_of[id(p)]
        for key, value in state.items():
            arr = value.detach().cpu().double().numpy() if torch.is_tensor(value) else np.asarray(float(value))
            arrays[f"{prefix}.{key}"] = arr
    write_blob(directory, "opt", arrays)


def _load_optimizer(optimizer, model, directory: Path) -> None:
    arrays = read_blob(directory, "opt")
    params = dict(model.named_parameters())
    grouped: dict[str, dict[str, np.ndarray]] = {}
    for full, arr in arrays.items():
        prefix, key = full.rsplit(".", 1)
        grouped.setdefault(prefix, {})[key] = arr
    trainable = {id(p) for group in optimizer.param_groups for p in group["params"]}
    for prefix, state in grouped.items():
        p = params[prefix]
        if id(p) not in trainable:
            continue
        restored = {}
        for key, arr in state.items():
            if key == "step":
                restored[key] = torch.tensor(float(arr), dtype=torch.float32)
            else:
                restored[key] = torch.as_tensor(arr, dtype=p.dtype).reshape(p.shape)
        optimizer.state[p] = restored


def total_step_count(run_cfg: RunConfig, corpus: Corpus) -> int:
    if run_cfg.steps is not None:
        return run_cfg.steps
    per_epoch = math.ceil(len(corpus.train_ids) / run_cfg.batch_size)
    return run_cfg.epochs * per_epoch


def pretrain(
    run_cfg: RunConfig,
    out_dir: Path,
    resume: Path | None = None,
    until_step: int | None = None,
) -> RunResult:
    """Run the configured schedule; ``until_step`` caps this session.

    Stopping early still writes a resumable checkpoint; resuming replays the
    exact trajectory because batches, masks and the lr schedule are all
    derived from (config, seed, step), never from session boundaries.
    """
    run_cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(run_cfg.seed)

    corpus = build_corpus(run_cfg.corpus)
    model = build_model(run_cfg.model_config(len(corpus.vocab)))
    instruments = build_instruments(run_cfg, corpus)
    save_instruments(instruments, out)
    objective_cfg = _objective_config(run_cfg)
    cfg_hash = config_hash(run_cfg.to_dict())

    optimizer = make_optimizer(model, run_cfg.optimizer)
    start_step = 0
    if resume is not None:
        meta = load_meta(resume)
        if meta.get("run_config_hash") != cfg_hash:
            raise CheckpointError("resume rejected: checkpoint was produced by a different config")
        model = load_model(resume)
        optimizer = make_optimizer(model, run_cfg.optimizer)
        _load_optimizer(optimizer, model, Path(resume))
        start_step = int(meta["step"])

    total_steps = total_step_count(run_cfg, corpus)
    stop_at = total_steps if until_step is None else min(until_step, total_steps)
    per_epoch = math.ceil(len(corpus.train_ids) / run_cfg.batch_size)
    log_path = out / "log.jsonl"
    report_dict: dict = {}
    mode = "a" if start_step else "w"
    with open(log_path, mode) as log:
        for step in range(start_step, stop_at):
            epoch = step // per_epoch
            order = epoch_order(corpus.train_ids, epoch, run_cfg.seed)
            offset = (step % per_epoch) * run_cfg.batch_size
            indices = order[offset : offset + run_cfg.batch_size]
            if not indices:
                indices = order[: run_cfg.batch_size]
            indices = indices * run_cfg.views_per_clip
            batch = assemble_batch(model, corpus, indices, run_cfg, instruments, step)
            lr = lr_at(step, total_steps, run_cfg.optimizer)
            set_lr(optimizer, lr)
            loss, report = total_loss(model, batch, objective_cfg)
            optimizer.zero_grad()
            loss.backward()
            clip_gradients(model, run_cfg.optimizer)
            optimizer.step()
            report_dict = report.to_dict()
            log.write(json.dumps({"step": step, "lr": lr, **report_dict}) + "\n")

    ckpt = out / "checkpoint"
    save_model(
        model, ckpt, step=stop_at, run_config=run_cfg.to_dict(),
        extra_meta={"phase": "pretrain", "total_steps": total_steps},
    )
    _save_optimizer(optimizer, model, ckpt)
    save_instruments(instruments, ckpt)
    return RunResult(str(ckpt), str(log_path), stop_at, report_dict, cfg_hash)


# ------------------------------------------------------------------- finetune


def _check_compatible(model: VideoTextModel, run_cfg: RunConfig, corpus: Corpus) -> None:
    wanted = run_cfg.model_config(len(corpus.vocab))
    got = model.config
    for attr in ("vocab_size", "hidden_size", "patch_size", "frame_size", "max_frames", "max_text_len"):
        if getattr(got, attr) != getattr(wanted, attr):
            raise CheckpointError(
                f"checkpoint {attr}={getattr(got, attr)} incompatible with config {getattr(wanted, attr)}"
            )


def finetune(checkpoint: Path, task: str, run_cfg: RunConfig, out_dir: Path) -> RunResult:
    if task not in FINETUNE_TASKS:
        raise InvalidConfigError(f"unknown finetune task {task!r}")
    run_cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(run_cfg.seed)

    corpus = build_corpus(run_cfg.corpus)
    model = load_model(checkpoint)
    _check_compatible(model, run_cfg, corpus)
    if task == "retrieval":
        model.init_t2v_from_vtm()

    if run_cfg.freeze_backbone:
        head = model.t2v_head if task == "retrieval" else model.mlm_head
        optimizer = make_optimizer(model, run_cfg.optimizer, parameters=head.parameters())
    else:
        optimizer = make_optimizer(model, run_cfg.optimizer)

    qa_instances = None
    if task.startswith("qa_"):
        qa_instances = make_qa_instances(
            corpus, task.removeprefix("qa_"), corpus.train_ids, seed=run_cfg.seed,
            frame_count=run_cfg.frames_per_sample, crop=run_cfg.effective_crop,
        )
    train_units = qa_instances if qa_instances is not None else corpus.train_ids
    per_epoch = math.ceil(len(train_units) / run_cfg.batch_size)
    total_steps = run_cfg.steps if run_cfg.steps is not None else run_cfg.epochs * per_epoch

    log_path = out / "log.jsonl"
    report: dict = {}
    with open(log_path, "w") as log:
        for step in range(total_steps):
            epoch = step // per_epoch
            rng = np.random.default_rng(derive_seed(run_cfg.seed, 7, epoch))
            order = rng.permutation(len(train_units))
            offset = (step % per_epoch) * run_cfg.batch_size
            picked = order[offset : offset + run_cfg.batch_size]
            if picked.size < run_cfg.batch_size:
                # wrap short trailing batches so pairwise losses keep negatives
                top_up = order[: min(run_cfg.batch_size - picked.size, len(order) - picked.size)]
                picked = np.concatenate([picked, top_up]) if picked.size else order[: run_cfg.batch_size]
            set_lr(optimizer, lr_at(step, total_steps, run_cfg.optimizer))
            loss = _finetune_step_loss(model, corpus, task, picked, run_cfg, qa_instances, step)
            optimizer.zero_grad()
            loss.backward()
            clip_gradients(model, run_cfg.optimizer)
            optimizer.step()
            report = {"loss": float(loss.detach())}
            log.write(json.dumps({"step": step, "task": task, **report}) + "\n")

    ckpt = out / "checkpoint"
    save_model(
        model, ckpt, step=total_steps, run_config=run_cfg.to_dict(),
        extra_meta={"phase": "finetune", "finetune_task": task, "source": str(checkpoint)},
    )
    return RunResult(str(ckpt), str(log_path), total_steps, report, config_hash(run_cfg.to_dict()))


def _finetune_step_loss(model, corpus, task, picked, run_cfg, qa_instances, step):
    dtype = next(model.parameters()).dtype
    if task == "retrieval":
        clip_ids = [corpus.train_ids[i] for i in picked] * run_cfg.views_per_clip
        samples = [
            sample_frames(
                corpus.clip(cid), run_cfg.frames_per_sample, "train", run_cfg.effective_crop,
                seed=derive_seed(run_cfg.seed, 8, step, i),
            )
            for i, cid in enumerate(clip_ids)
        ]
        frames = torch.as_tensor(np.stack([s.frames for s in samples]), dtype=dtype)
        captions = [corpus.caption_ids(c) for c in clip_ids]
        tokens, pad = pad_token_batch(captions, corpus.vocab.pad_id)
        v = model.video_encode(frames)
        w = model.embed_text(torch.as_tensor(tokens))
        text_pad = torch.as_tensor(pad)
        fused = model.cross_fuse(v, w, text_pad=text_pad)
        pools = [
            [j for j in range(len(clip_ids)) if captions[j] != captions[i]]
            for i in range(len(clip_ids))
        ]
        count = min((len(p) for p in pools), default=0)
        if count == 0:
            raise InvalidConfigError("retrieval finetuning needs >= 2 distinct captions per batch")
        negatives = [pool[:count] for pool in pools]
        anchor_idx = [i for i, js in enumerate(negatives) for _ in js]
        neg_idx = [j for js in negatives for j in js]
        # all other pairwise combinations serve as negatives: swapped texts
        # rank texts per video, swapped videos rank videos per text (the
        # direction retrieval is scored in)
        text_swap = model.cross_fuse(v[anchor_idx], w[neg_idx], text_pad=text_pad[neg_idx])
        video_swap = model.cross_fuse(v[neg_idx], w[anchor_idx], text_pad=text_pad[anchor_idx])
        shape = (len(clip_ids), -1, v.shape[-1])
        return 0.5 * (
            vtm_loss(fused.h_c, text_swap.h_c.reshape(shape), model.t2v_head)
            + vtm_loss(fused.h_c, video_swap.h_c.reshape(shape), model.t2v_head)
        )
    if task.startswith("qa_"):
        losses = [qa_finetune_loss(model, qa_instances[i], corpus.vocab) for i in picked]
        return torch.stack(losses).mean()
    # captioning
    losses = []
    for i in picked:
        clip_id = corpus.train_ids[i]
        clip = corpus.clip(clip_id)
        sample = sample_frames(
            clip, run_cfg.frames_per_sample, "train", run_cfg.effective_crop,
            seed=derive_seed(run_cfg.seed, 9, step, int(i)),
        )
        loss, count = caption_finetune_loss(
            model, sample.frames, corpus.caption_ids(clip_id), corpus.vocab,
            seed=derive_seed(run_cfg.seed, 10, step, int(i)), ratio=run_cfg.mlm_ratio,
        )
        if count:
            losses.append(loss)
    if not losses:
        return next(model.parameters()).sum() * 0.0
    return torch.stack(losses).mean()


# ------------------------------------------------------------------- evaluate


def _split_ids(corpus: Corpus, split: str) -> list[int]:
    ids = {"train": corpus.train_ids, "val": corpus.val_ids}.get(split)
    if ids is None:
        raise InvalidConfigError(f"unknown split {split!r}")
    if not ids:
        raise InvalidConfigError(f"split {split!r} is empty")
    return ids


def _eval_frames(corpus: Corpus, clip_id: int, run_cfg: RunConfig) -> np.ndarray:
    return sample_frames(
        corpus.clip(clip_id), run_cfg.frames_per_sample, "eval", run_cfg.effective_crop
    ).frames


@torch.no_grad()
def _qa_accuracy_batched(model, instances, vocab, batch_size: int) -> float:
    dtype = next(model.parameters()).dtype
    hits = 0
    for start in range(0, len(instances), batch_size):
        chunk = instances[start : start + batch_size]
        token_lists = [format_qa_tokens(inst, vocab) for inst in chunk]
        slots = [tokens.index(vocab.mask_id) for tokens in token_lists]
        tokens, pad = pad_token_batch(token_lists, vocab.pad_id)
        frames = torch.as_tensor(np.stack([inst.frames for inst in chunk]), dtype=dtype)
        fused = model.cross_fuse(
            model.video_encode(frames),
            model.embed_text(torch.as_tensor(tokens)),
            text_pad=torch.as_tensor(pad),
        )
        for i, inst in enumerate(chunk):
            logits = model.mlm_logits(fused.h_x[i, slots[i]]).double().numpy()
            if inst.options is not None:
                prediction = restricted_argmax(logits, vocab.answer_ids(len(inst.options)))
                hits += prediction == inst.answer
            else:
                hits += vocab.id_to_token[int(np.argmax(logits))] == inst.answer
    return hits / len(instances)


def intact_pair_batch(
    model: VideoTextModel, corpus: Corpus, ids: list[int], run_cfg: RunConfig
) -> PretrainBatch:
    """Eval-sampled frames with clean captions: no masks, no corruption."""
    dtype = next(model.parameters()).dtype
    frames = torch.as_tensor(
        np.stack([_eval_frames(corpus, i, run_cfg) for i in ids]), dtype=dtype
    )
    captions = [corpus.caption_ids(i) for i in ids]
    tokens, pad = pad_token_batch(captions, corpus.vocab.pad_id)
    pools = [[j for j in range(len(ids)) if captions[j] != captions[i]] for i in range(len(ids))]
    count = min((len(p) for p in pools), default=0)
    return PretrainBatch(
        frames=frames,
        patch_masks=None,
        tokens=torch.as_tensor(tokens),
        mlm_labels=torch.full(tokens.shape, -1, dtype=torch.long),
        text_pad=torch.as_tensor(pad),
        negatives=[pool[:count] for pool in pools],
    )


def _pretrain_metrics(model, corpus, ids, run_cfg, checkpoint) -> dict:
    """Per-objective evaluation, each on its own corruption only.

    The masked-prediction loss is measured on masked video; matching accuracy
    ranks intact pairs; token accuracy sees corrupted text but intact video.
    """
    instruments = load_instruments(checkpoint)
    metrics: dict[str, float] = {}
    reports = []
    if "mvm" in run_cfg.tasks and run_cfg.mvm_targets:
        objective_cfg = _objective_config(run_cfg)
        for start in range(0, len(ids), run_cfg.batch_size):
            chunk = ids[start : start + run_cfg.batch_size]
            batch = assemble_batch(model, corpus, chunk, run_cfg, instruments, step=0)
            with torch.no_grad():
                _, report = total_loss(model, batch, objective_cfg)
            reports.append(report)
        metrics["mvm_loss"] = float(np.mean([r.mvm for r in reports]))
    if "vtm" in run_cfg.tasks and len(ids) > 1:
        batch = intact_pair_batch(model, corpus, ids, run_cfg)
        if batch.negatives and batch.negatives[0]:
            metrics["vtm_accuracy"] = vtm_accuracy(model, batch)
    if "mlm" in run_cfg.tasks:
        text_only = dataclasses.replace(run_cfg, tasks=("mlm",), mvm_targets=())
        accs = []
        for es in range(4):
            batch = assemble_batch(model, corpus, ids, text_only, instruments, step=10_000 + es)
            if bool((batch.mlm_labels >= 0).any()):
                accs.append(mlm_accuracy(model, batch))
        if accs:
            metrics["mlm_accuracy"] = float(np.mean(accs))
            metrics["mlm_loss"] = _mlm_eval_loss(model, corpus, ids, text_only, instruments)
    return metrics


def _mlm_eval_loss(model, corpus, ids, text_only_cfg, instruments) -> float:
    batch = assemble_batch(model, corpus, ids, text_only_cfg, instruments, step=10_000)
    with torch.no_grad():
        _, report = total_loss(model, batch, _objective_config(text_only_cfg))
    return report.mlm


def evaluate(
    checkpoint: Path, task: str, split: str, run_cfg: RunConfig, batch_size: int = 8
) -> dict:
    run_cfg.validate()
    corpus = build_corpus(run_cfg.corpus)
    model = load_model(checkpoint)
    _check_compatible(model, run_cfg, corpus)
    meta = load_meta(checkpoint)
    ids = _split_ids(corpus, split)
    metrics: dict[str, float] = {}
    num_instances = len(ids)

    if task == "retrieval":
        head = "t2v" if meta.get("finetune_task") == "retrieval" else "vtm"
        videos = [_eval_frames(corpus, i, run_cfg) for i in ids]
        texts = [corpus.caption_ids(i) for i in ids]
        scores = score_matrix(model, videos, texts, head=head)
        index = RetrievalIndex(
            [corpus.clip_ids[i] for i in ids], [corpus.clip_ids[i] for i in ids],
            scores, list(range(len(ids))),
        )
        for k in (1, 5, 10):
            if k <= len(ids):
                metrics[f"recall_at_{k}"] = recall_at_k(index, k)
    elif task in ("qa_mc", "qa_open", "qa_fib"):
        instances = make_qa_instances(
            corpus, task.removeprefix("qa_"), ids, seed=run_cfg.seed,
            frame_count=run_cfg.frames_per_sample, crop=run_cfg.effective_crop,
        )
        num_instances = len(instances)
        if not instances:
            raise InvalidConfigError("no QA instances for this split")
        metrics["accuracy"] = _qa_accuracy_batched(model, instances, corpus.vocab, batch_size)
    elif task == "captioning":
        predictions, references = [], []
        for i in ids:
            frames = _eval_frames(corpus, i, run_cfg)
            predictions.append(caption_generate(model, frames, corpus.vocab))
            references.append(corpus.caption_ids(i))
        metrics.update(caption_metrics(predictions, references))
    elif task == "pretrain":
        metrics.update(_pretrain_metrics(model, corpus, ids, run_cfg, checkpoint))
    else:
        raise InvalidConfigError(f"unknown evaluation task {task!r}")

    return {
        "task": task,
        "split": split,
        "metrics": metrics,
        "num_instances": num_instances,
        "seed": run_cfg.seed,
        "checkpoint": str(checkpoint),
        "config_hash": config_hash(run_cfg.to_dict()),
    }
