"""Central finite-difference verification of every loss gradient.

Runs a d=8 double-precision model over a 2x2x2 patch grid and compares
autograd gradients against (f(x+h) - f(x-h)) / 2h on a seeded sample of
coordinates in every parameter tensor, for each MVM target kind under both
head kinds and both regression losses, plus the matching and language losses.
"""

from __future__ import annotations

import time

import numpy as np
import torch

from ..model.config import ModelConfig
from ..model.core import build_model
from ..objectives import mlm_loss, mvm_loss, vtm_loss
from ..targets.kinds import TargetKind, TargetTensor, target_dim

TINY = dict(
    vocab_size=12,
    hidden_size=8,
    vt_layers=1,
    vt_heads=2,
    ct_layers=1,
    ct_heads=2,
    patch_size=4,
    frame_size=8,
    max_frames=2,
    max_text_len=6,
    codebook_size=5,
    teacher_dim=6,
)
ALL_KINDS = tuple(k.value for k in TargetKind)


def _synthetic_targets(kind: TargetKind, cfg: ModelConfig, rng: np.random.Generator):
    """Random but well-formed targets on a fixed masked-position set."""
    positions = np.array([[0, 0, 0], [0, 1, 1], [1, 0, 1]], dtype=np.int64)
    if kind is TargetKind.FLOW:
        positions = positions[positions[:, 0] < 1]  # frames with a successor
    if kind.is_discrete:
        ids = rng.integers(0, cfg.codebook_size, size=positions.shape[0])
        return TargetTensor(kind, positions, ids=ids.astype(np.int64))
    dim = target_dim(kind, cfg.patch_size, cfg.codebook_size, cfg.teacher_dim)
    values = rng.standard_normal((positions.shape[0], dim))
    return TargetTensor(kind, positions, values=values)


def _relative_error(analytic: float, numeric: float, floor: float = 1e-4) -> float:
    # the floor absorbs central-difference round-off at near-zero gradients
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _check_closure(model, closure, rng, coords_per_param: int, fd_step: float):
    model.zero_grad()
    closure().backward()
    per_param = {}
    for name, param in model.named_parameters():
        if param.grad is None:
            continue
        flat = param.data.view(-1)
        grads = param.grad.view(-1)
        n_coords = min(coords_per_param, flat.numel())
        worst = 0.0
        for idx in rng.choice(flat.numel(), size=n_coords, replace=False):
            original = flat[idx].item()
            with torch.no_grad():
                flat[idx] = original + fd_step
                up = closure().item()
                flat[idx] = original - fd_step
                down = closure().item()
                flat[idx] = original
            numeric = (up - down) / (2 * fd_step)
            worst = max(worst, _relative_error(grads[idx].item(), numeric))
        per_param[name] = worst
    return per_param


def grad_check(seed: int = 0, coords_per_param: int = 2, fd_step: float = 1e-6) -> dict:
    started = time.time()
    rng = np.random.default_rng(seed)
    frames = torch.as_tensor(rng.random((2, 2, 8, 8, 3)), dtype=torch.float64)
    patch_mask = torch.zeros(2, 2, 2, 2, dtype=torch.bool)
    patch_mask[0, 0, 0, 0] = patch_mask[0, 0, 1, 1] = patch_mask[0, 1, 0, 1] = True
    patch_mask[1, 0, 1, 1] = patch_mask[1, 1, 1, 0] = True
    tokens = torch.as_tensor(rng.integers(5, 12, size=(2, 4)))
    labels = torch.full((2, 4), -1, dtype=torch.long)
    labels[0, 1] = int(tokens[0, 1])
    labels[1, 2] = int(tokens[1, 2])
    text_pad = torch.zeros(2, 4, dtype=torch.bool)

    losses: dict[str, dict[str, float]] = {}

    def fused():
        v = model.video_encode(frames, patch_mask)
        w = model.embed_text(tokens)
        return v, w, model.cross_fuse(v, w, text_pad=text_pad)

    for head_kind in ("mlp", "linear"):
        cfg = ModelConfig(**TINY, mvm_targets=ALL_KINDS, mvm_head_kind=head_kind, init_seed=seed)
        model = build_model(cfg, dtype=torch.float64)
        for kind_name in ALL_KINDS:
            kind = TargetKind(kind_name)
            kind_rng = np.random.default_rng(seed + hash(kind_name) % 1000)
            target = _synthetic_targets(kind, cfg, kind_rng)
            loss_kinds = ("ce",) if kind.is_discrete else ("l1", "l2")
            for loss_kind in loss_kinds:

                def closure(kind=kind, target=target, loss_kind=loss_kind):
                    _, _, out = fused()
                    loss, _ = mvm_loss(
                        out.h_v, [target, None], model.mvm_head(kind), kind,
                        loss_kind=None if kind.is_discrete else loss_kind,
                    )
                    return loss

                name = f"mvm_{kind_name}_{head_kind}_{loss_kind}"
                losses[name] = _check_closure(model, closure, np.random.default_rng(seed), coords_per_param, fd_step)

    cfg = ModelConfig(**TINY, mvm_targets=(), init_seed=seed)
    model = build_model(cfg, dtype=torch.float64)

    def vtm_closure():
        v, w, out = fused()
        neg = model.cross_fuse(v[[0, 1]], w[[1, 0]], text_pad=text_pad[[1, 0]])
        return vtm_loss(out.h_c, neg.h_c[:, None, :], model.vtm_head)

    def mlm_closure():
        _, _, out = fused()
        loss, _ = mlm_loss(out.h_x, labels, model.mlm_head)
        return loss

    losses["vtm"] = _check_closure(model, vtm_closure, np.random.default_rng(seed), coords_per_param, fd_step)
    losses["mlm"] = _check_closure(model, mlm_closure, np.random.default_rng(seed), coords_per_param, fd_step)

    summary = {name: max(per.values()) for name, per in losses.items()}
    return {
        "losses": summary,
        "per_parameter": losses,
        "max_rel_err": max(summary.values()),
        "runtime_s": time.time() - started,
        "coords_per_param": coords_per_param,
        "fd_step": fd_step,
    }
