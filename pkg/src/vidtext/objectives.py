"""Pre-training losses: masked visual modeling, video-text matching, masked
language modeling, and their unit-weight sum.

MVM regresses (l1 by default, l2 optional) or classifies (cross-entropy for
the discrete kind) per-patch targets at mask-true positions only; the flow
head reads the concatenation of a patch's hidden state with the same patch on
the next frame.  VTM scores the CLS slot of the positive pair against
in-batch text swaps with a softmax over scalar logits.  MLM is mean
cross-entropy over corrupted token positions.  When several MVM target kinds
are combined their losses are plainly added.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .model.core import VideoTextModel
from .targets.kinds import TargetKind, TargetTensor


@dataclass(frozen=True)
class ObjectiveConfig:
    tasks: tuple[str, ...] = ("vtm", "mlm", "mvm")
    mvm_kinds: tuple[str, ...] = ("pixel",)
    loss_kind: str = "l1"
    mvm_on_image_data: bool = False
    num_negatives: int | None = None  # None = every other text in the batch


@dataclass
class LossReport:
    mvm: float = 0.0
    vtm: float = 0.0
    mlm: float = 0.0
    total: float = 0.0
    masked_patches: int = 0
    masked_tokens: int = 0
    num_negatives: int = 0
    mvm_by_kind: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mvm": self.mvm,
            "vtm": self.vtm,
            "mlm": self.mlm,
            "total": self.total,
            "masked_patches": self.masked_patches,
            "masked_tokens": self.masked_tokens,
            "num_negatives": self.num_negatives,
            "mvm_by_kind": dict(self.mvm_by_kind),
        }


@dataclass
class PretrainBatch:
    """Model-ready sample stack produced by the batch builder."""

    frames: torch.Tensor  # (B, T, H, W, 3)
    patch_masks: torch.Tensor | None  # (B, T, Gh, Gw) bool
    tokens: torch.Tensor  # (B, L) corrupted ids
    mlm_labels: torch.Tensor  # (B, L), -1 where no label
    text_pad: torch.Tensor  # (B, L) bool, True at padding
    targets: dict[str, list[TargetTensor]] = field(default_factory=dict)
    negatives: list[list[int]] = field(default_factory=list)  # per-anchor batch indices
    is_image: bool = False

    @property
    def batch_size(self) -> int:
        return self.frames.shape[0]


def _gather_rows(h_v: torch.Tensor, targets: list[TargetTensor], kind: TargetKind):
    """Stack per-sample target rows into (rows, D_in) inputs and batch targets."""
    B, T, gh, gw, d = h_v.shape
    idx_b, idx_t, idx_r, idx_c = [], [], [], []
    for b, tt in enumerate(targets):
        if tt is None or tt.rows == 0:
            continue
        if tt.kind is not kind:
            raise ValueError(f"target kind mismatch: {tt.kind} vs {kind}")
        pos = tt.positions
        max_t = T - 1 if kind is TargetKind.FLOW else T
        if pos[:, 0].max() >= max_t or pos[:, 1].max() >= gh or pos[:, 2].max() >= gw:
            raise ValueError("target positions fall outside the feature grid")
        idx_b.extend([b] * tt.rows)
        idx_t.extend(pos[:, 0].tolist())
        idx_r.extend(pos[:, 1].tolist())
        idx_c.extend(pos[:, 2].tolist())
    if not idx_b:
        return None, None
    bi = torch.as_tensor(idx_b)
    ti = torch.as_tensor(idx_t)
    ri = torch.as_tensor(idx_r)
    ci = torch.as_tensor(idx_c)
    inputs = h_v[bi, ti, ri, ci]
    if kind is TargetKind.FLOW:
        inputs = torch.cat([inputs, h_v[bi, ti + 1, ri, ci]], dim=-1)
    if kind.is_discrete:
        stacked = np.concatenate([t.ids for t in targets if t is not None and t.rows])
        target = torch.as_tensor(stacked, dtype=torch.long)
    else:
        stacked = np.concatenate([t.values for t in targets if t is not None and t.rows])
        target = torch.as_tensor(stacked, dtype=h_v.dtype)
    return inputs, target


def mvm_loss(
    h_v: torch.Tensor,
    targets: list[TargetTensor],
    head: torch.nn.Module,
    kind: TargetKind | str,
    loss_kind: str | None = None,
) -> tuple[torch.Tensor, int]:
    """Masked-patch prediction loss; returns (scalar, row count)."""
    kind = TargetKind(kind)
    inputs, target = _gather_rows(h_v, targets, kind)
    if inputs is None:
        return h_v.sum() * 0.0, 0
    pred = head(inputs)
    if kind.is_discrete:
        if int(target.max()) >= pred.shape[-1]:
            raise ValueError("class id exceeds codebook size")
        return F.cross_entropy(pred, target), target.shape[0]
    if pred.shape != target.shape:
        raise ValueError(
            f"prediction shape {tuple(pred.shape)} does not match targets {tuple(target.shape)}"
        )
    loss_kind = loss_kind or targets[0].loss_kind or "l1"
    residual = pred - target
    loss = residual.abs().mean() if loss_kind == "l1" else residual.pow(2).mean()
    return loss, target.shape[0]


def vtm_loss(
    h_c_pos: torch.Tensor, h_c_neg: torch.Tensor, head: torch.nn.Module
) -> torch.Tensor:
    """Softmax of the positive pair's scalar logit against its negatives.

    ``h_c_pos`` is (B, D); ``h_c_neg`` is (B, n, D) with n >= 1.  Each
    anchor's loss is -log softmax of the positive among {positive, negatives}.
    """
    if h_c_neg.ndim != 3 or h_c_neg.shape[1] == 0:
        raise ValueError("vtm needs at least one negative per anchor")
    pos = head(h_c_pos).squeeze(-1)  # (B,)
    neg = head(h_c_neg).squeeze(-1)  # (B, n)
    logits = torch.cat([pos[:, None], neg], dim=1)
    return (torch.logsumexp(logits, dim=1) - pos).mean()


def mlm_loss(
    h_x: torch.Tensor, labels: torch.Tensor, head: torch.nn.Module
) -> tuple[torch.Tensor, int]:
    """Mean cross-entropy at labeled token positions; (loss, token count)."""
    selected = labels >= 0
    if not bool(selected.any()):
        return h_x.sum() * 0.0, 0
    logits = head(h_x[selected])
    chosen = labels[selected]
    if int(chosen.max()) >= logits.shape[-1]:
        raise ValueError("label id exceeds vocabulary size")
    return F.cross_entropy(logits, chosen), int(selected.sum())


def _negative_fusion(model: VideoTextModel, v, w, text_pad, negatives):
    """Fuse every (video_i, text_j) negative pair in one batched pass."""
    anchor_idx, neg_idx = [], []
    for i, js in enumerate(negatives):
        anchor_idx.extend([i] * len(js))
        neg_idx.extend(js)
    if not anchor_idx:
        return None
    fused = model.cross_fuse(v[anchor_idx], w[neg_idx], text_pad=text_pad[neg_idx])
    counts = [len(js) for js in negatives]
    n = max(counts)
    if any(c != n for c in counts):
        raise ValueError("negatives per anchor must be uniform in a batch")
    return fused.h_c.reshape(len(negatives), n, -1)


def total_loss(
    model: VideoTextModel, batch: PretrainBatch, cfg: ObjectiveConfig
) -> tuple[torch.Tensor, LossReport]:
    """One fused forward pass computing every enabled objective.

    MVM is skipped on image (single-frame) batches unless explicitly enabled,
    matching the recipe of applying it to video data only.
    """
    report = LossReport()
    v = model.video_encode(batch.frames, batch.patch_masks)
    w = model.embed_text(batch.tokens)
    fused = model.cross_fuse(v, w, text_pad=batch.text_pad)
    pieces = []

    if "mvm" in cfg.tasks and batch.targets and not (batch.is_image and not cfg.mvm_on_image_data):
        mvm_total = None
        for kind_name, per_sample in batch.targets.items():
            kind = TargetKind(kind_name)
            loss, rows = mvm_loss(
                fused.h_v, per_sample, model.mvm_head(kind), kind, loss_kind=cfg.loss_kind
            )
            report.mvm_by_kind[kind_name] = float(loss.detach())
            report.masked_patches += rows
            mvm_total = loss if mvm_total is None else mvm_total + loss
        if mvm_total is not None:
            report.mvm = float(mvm_total.detach())
            pieces.append(mvm_total)

    if "vtm" in cfg.tasks:
        neg_h_c = _negative_fusion(model, v, w, batch.text_pad, batch.negatives)
        if neg_h_c is not None:
            loss = vtm_loss(fused.h_c, neg_h_c, model.vtm_head)
            report.vtm = float(loss.detach())
            report.num_negatives = neg_h_c.shape[1]
            pieces.append(loss)

    if "mlm" in cfg.tasks:
        loss, count = mlm_loss(fused.h_x, batch.mlm_labels, model.mlm_head)
        report.mlm = float(loss.detach())
        report.masked_tokens = count
        if count:
            pieces.append(loss)

    total = pieces[0] if pieces else v.sum() * 0.0
    for piece in pieces[1:]:
        total = total + piece
    report.total = report.mvm + report.vtm + report.mlm
    return total, report


# ------------------------------------------------------------------ accuracy


@torch.no_grad()
def vtm_accuracy(model: VideoTextModel, batch: PretrainBatch) -> float:
    """Fraction of anchors whose positive logit beats every negative."""
    v = model.video_encode(batch.frames, batch.patch_masks)
    w = model.embed_text(batch.tokens)
    fused = model.cross_fuse(v, w, text_pad=batch.text_pad)
    neg_h_c = _negative_fusion(model, v, w, batch.text_pad, batch.negatives)
    if neg_h_c is None:
        raise ValueError("vtm accuracy needs negatives")
    pos = model.vtm_logit(fused.h_c)
    neg = model.vtm_head(neg_h_c).squeeze(-1)
    return float((pos[:, None] > neg).all(dim=1).float().mean())


@torch.no_grad()
def mlm_accuracy(model: VideoTextModel, batch: PretrainBatch) -> float:
    """Fraction of labeled positions where the argmax token is the label."""
    v = model.video_encode(batch.frames, batch.patch_masks)
    w = model.embed_text(batch.tokens)
    fused = model.cross_fuse(v, w, text_pad=batch.text_pad)
    selected = batch.mlm_labels >= 0
    if not bool(selected.any()):
        raise ValueError("no labeled positions in batch")
    logits = model.mlm_logits(fused.h_x[selected])
    return float((logits.argmax(-1) == batch.mlm_labels[selected]).float().mean())
