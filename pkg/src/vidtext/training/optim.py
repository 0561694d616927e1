"""Decoupled-weight-decay optimizer with linear warmup and cosine decay."""

from __future__ import annotations

import math

import torch

from .config import OptimizerSettings


def lr_at(step: int, total_steps: int, settings: OptimizerSettings) -> float:
    """Linear warmup over the first warmup fraction, cosine decay to zero after."""
    warmup = max(1, int(round(total_steps * settings.warmup_fraction)))
    if step < warmup:
        return settings.peak_lr * (step + 1) / warmup
    span = max(1, total_steps - warmup)
    progress = min(1.0, (step - warmup) / span)
    return settings.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def make_optimizer(
    model: torch.nn.Module,
    settings: OptimizerSettings,
    parameters=None,
) -> torch.optim.AdamW:
    """AdamW over the model (or an explicit parameter list).

    When the matching-head multiplier is set, the scalar matching heads get
    their own parameter group so their learning rate scales with it.
    """
    if parameters is not None:
        groups = [{"params": list(parameters), "lr_scale": 1.0}]
    else:
        boosted = set()
        mult = settings.matching_head_lr_multiplier
        if mult != 1.0:
            for head in (getattr(model, "vtm_head", None), getattr(model, "t2v_head", None)):
                if head is not None:
                    boosted.update(id(p) for p in head.parameters())
        main = [p for p in model.parameters() if id(p) not in boosted]
        groups = [{"params": main, "lr_scale": 1.0}]
        if boosted:
            head_params = [p for p in model.parameters() if id(p) in boosted]
            groups.append({"params": head_params, "lr_scale": mult})
    optimizer = torch.optim.AdamW(
        groups,
        lr=settings.peak_lr,
        betas=tuple(settings.betas),
        weight_decay=settings.weight_decay,
    )
    return optimizer


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr * group.get("lr_scale", 1.0)


def clip_gradients(model: torch.nn.Module, settings: OptimizerSettings) -> None:
    if settings.grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), settings.grad_clip)
