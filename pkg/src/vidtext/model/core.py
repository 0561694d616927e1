"""The three-component video-text model.

A flat spatio-temporal patch transformer encodes sampled frames (masked
patches are swapped for a learnable mask embedding before any attention), a
language embedder produces word vectors, and a cross-modal transformer fuses
``[video patches; CLS; word tokens]`` with modality-type embeddings into the
joint representation partitioned back into per-patch, CLS and per-token
slices.  Full joint attention keeps the 1:1 patch-to-hidden-state
correspondence the masked-visual-modeling heads rely on.

Prediction heads live on the model so every learnable tensor is addressable
by its ``named_parameters`` path (the checkpoint and gradient-check key).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..targets.kinds import TargetKind, target_dim
from .config import ModelConfig
from .transformer import Block, Mlp2Head, init_parameters


@dataclass
class JointFeatures:
    """Cross-modal outputs: per-patch grid, CLS vector and per-token slice."""

    h_v: torch.Tensor  # (B, T, Gh, Gw, D)
    h_c: torch.Tensor  # (B, D)
    h_x: torch.Tensor  # (B, L, D)
    attention: list[torch.Tensor] | None = None  # per CT layer (B, heads, S, S)

    @property
    def sequence_length(self) -> int:
        b, t, gh, gw, _ = self.h_v.shape
        return t * gh * gw + 1 + self.h_x.shape[1]


@dataclass
class AttentionTrace:
    """CLS-query attention from the last fusion layer, averaged over heads."""

    video: torch.Tensor  # (B, T, Gh, Gw)
    text: torch.Tensor  # (B, L)
    cls_self: torch.Tensor  # (B,)


class VideoTextModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.hidden_size
        p = config.patch_size

        self.patch_embed = nn.Linear(p * p * 3, d)
        self.mask_embedding = nn.Parameter(torch.zeros(d))
        self.vt_time_pos = nn.Parameter(torch.zeros(config.max_frames, d))
        self.vt_space_pos = nn.Parameter(torch.zeros(config.patches_per_frame, d))
        self.vt_blocks = nn.ModuleList(
            Block(d, config.vt_heads, config.mlp_ratio) for _ in range(config.vt_layers)
        )
        # final norms keep the pre-norm residual stream bounded; a zero-layer
        # stack stays a strict identity, so they exist only alongside blocks
        self.vt_norm = nn.LayerNorm(d) if config.vt_layers else None

        self.token_embedding = nn.Parameter(torch.zeros(config.vocab_size, d))
        self.text_pos = nn.Parameter(torch.zeros(config.max_text_len, d))

        self.cls_embedding = nn.Parameter(torch.zeros(d))
        self.modality_embedding = nn.Parameter(torch.zeros(3, d))  # video / cls / text
        self.ct_blocks = nn.ModuleList(
            Block(d, config.ct_heads, config.mlp_ratio) for _ in range(config.ct_layers)
        )
        self.ct_norm = nn.LayerNorm(d) if config.ct_layers else None

        self.vtm_head = Mlp2Head(d, d, 1)
        self.mlm_head = Mlp2Head(d, d, config.vocab_size)
        self.t2v_head = Mlp2Head(d, d, 1)
        self.mvm_heads = nn.ModuleDict(
            {name: self._make_mvm_head(TargetKind(name)) for name in config.mvm_targets}
        )

    def _make_mvm_head(self, kind: TargetKind) -> nn.Module:
        d = self.config.hidden_size
        in_dim = 2 * d if kind is TargetKind.FLOW else d
        out_dim = target_dim(
            kind, self.config.patch_size, self.config.codebook_size, self.config.teacher_dim
        )
        if self.config.mvm_head_kind == "linear":
            return nn.Linear(in_dim, out_dim)
        return Mlp2Head(in_dim, d, out_dim)

    # ------------------------------------------------------------------ VT

    def patchify(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, T, H, W, 3) -> (B, T, Gh, Gw, p*p*3)."""
        p = self.config.patch_size
        B, T, H, W, C = frames.shape
        if H != self.config.frame_size or W != self.config.frame_size or C != 3:
            raise ValueError(
                f"expected frames of size {self.config.frame_size} with 3 channels, got {H}x{W}x{C}"
            )
        gh, gw = H // p, W // p
        x = frames.reshape(B, T, gh, p, gw, p, C)
        return x.permute(0, 1, 2, 4, 3, 5, 6).reshape(B, T, gh, gw, p * p * C)

    def video_encode(
        self, frames: torch.Tensor, patch_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Encode frames into the per-patch grid (B, T, Gh, Gw, D).

        Masked patches are replaced by the learnable mask embedding after
        patch projection and before position embeddings, so their pixel
        values never reach the transformer.
        """
        B, T = frames.shape[:2]
        if T > self.config.max_frames:
            raise ValueError(f"{T} frames exceed max_frames={self.config.max_frames}")
        x = self.patch_embed(self.patchify(frames))  # (B, T, Gh, Gw, D)
        gh, gw = x.shape[2], x.shape[3]
        if patch_mask is not None:
            if patch_mask.shape != (B, T, gh, gw):
                raise ValueError(f"patch mask shape {tuple(patch_mask.shape)} does not match grid")
            x = torch.where(patch_mask[..., None], self.mask_embedding.to(x.dtype), x)
        x = x + self.vt_time_pos[:T, None, None, :] + self.vt_space_pos.reshape(gh, gw, -1)
        x = x.reshape(B, T * gh * gw, -1)
        for block in self.vt_blocks:
            x, _ = block(x)
        if self.vt_norm is not None:
            x = self.vt_norm(x)
        return x.reshape(B, T, gh, gw, -1)

    # ------------------------------------------------------------------ LE

    def embed_text(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, L) token ids -> (B, L, D) word embeddings with positions."""
        if tokens.numel() and int(tokens.max()) >= self.config.vocab_size:
            raise ValueError("token id out of vocabulary range")
        if tokens.numel() and int(tokens.min()) < 0:
            raise ValueError("negative token id")
        L = tokens.shape[1]
        if L > self.config.max_text_len:
            raise ValueError(f"text length {L} exceeds max_text_len={self.config.max_text_len}")
        return self.token_embedding[tokens] + self.text_pos[:L]

    # ------------------------------------------------------------------ CT

    def _fusion_mask(
        self,
        batch: int,
        n_video: int,
        n_text: int,
        text_pad: torch.Tensor | None,
        causal_text: bool,
        device,
    ) -> torch.Tensor | None:
        if text_pad is None and not causal_text:
            return None
        S = n_video + 1 + n_text
        allowed = torch.ones(batch, 1, S, S, dtype=torch.bool, device=device)
        t0 = n_video + 1
        if text_pad is not None:
            allowed[:, 0, :, t0:] &= ~text_pad[:, None, :]
        if causal_text:
            # text attends to video, CLS and its own prefix; video/CLS rows
            # never see text, so a parallel forward matches stepwise decoding
            text_q = torch.arange(n_text, device=device)
            tri = text_q[:, None] >= text_q[None, :]
            allowed[:, 0, :t0, t0:] = False
            allowed[:, 0, t0:, t0:] &= tri
        return allowed

    def cross_fuse(
        self,
        v: torch.Tensor,
        w: torch.Tensor,
        text_pad: torch.Tensor | None = None,
        causal_text: bool = False,
        collect_attention: bool = False,
    ) -> JointFeatures:
        """Fuse video grid (B,T,Gh,Gw,D) and word embeddings (B,L,D)."""
        if v.shape[-1] != w.shape[-1] or v.shape[-1] != self.config.hidden_size:
            raise ValueError("video/text feature width does not match the model")
        if v.shape[0] != w.shape[0]:
            raise ValueError("video/text batch sizes differ")
        B, T, gh, gw, d = v.shape
        n_video, n_text = T * gh * gw, w.shape[1]

        mod = self.modality_embedding
        seq = torch.cat(
            [
                v.reshape(B, n_video, d) + mod[0],
                (self.cls_embedding + mod[1]).expand(B, 1, d),
                w + mod[2],
            ],
            dim=1,
        )
        allowed = self._fusion_mask(B, n_video, n_text, text_pad, causal_text, seq.device)
        attn = [] if collect_attention else None
        for block in self.ct_blocks:
            seq, probs = block(seq, allowed=allowed, need_weights=collect_attention)
            if collect_attention:
                attn.append(probs)
        if self.ct_norm is not None:
            seq = self.ct_norm(seq)
        return JointFeatures(
            h_v=seq[:, :n_video].reshape(B, T, gh, gw, d),
            h_c=seq[:, n_video],
            h_x=seq[:, n_video + 1 :],
            attention=attn,
        )

    def attention_trace(
        self, v: torch.Tensor, w: torch.Tensor, text_pad: torch.Tensor | None = None
    ) -> AttentionTrace:
        """Head-averaged CLS-query attention of the last fusion layer.

        Callers must pass features from an intact (unmasked) forward pass;
        the trace drives attended masking.
        """
        if not self.ct_blocks:
            raise ValueError("attention trace needs at least one fusion layer")
        fused = self.cross_fuse(v, w, text_pad=text_pad, collect_attention=True)
        B, T, gh, gw, _ = v.shape
        n_video = T * gh * gw
        row = fused.attention[-1][:, :, n_video, :].mean(dim=1)  # (B, S)
        return AttentionTrace(
            video=row[:, :n_video].reshape(B, T, gh, gw),
            text=row[:, n_video + 1 :],
            cls_self=row[:, n_video],
        )

    # ----------------------------------------------------------------- heads

    def vtm_logit(self, h_c: torch.Tensor) -> torch.Tensor:
        return self.vtm_head(h_c).squeeze(-1)

    def t2v_logit(self, h_c: torch.Tensor) -> torch.Tensor:
        return self.t2v_head(h_c).squeeze(-1)

    def mlm_logits(self, h_x: torch.Tensor) -> torch.Tensor:
        return self.mlm_head(h_x)

    def mvm_head(self, kind: TargetKind) -> nn.Module:
        try:
            return self.mvm_heads[kind.value]
        except KeyError:
            raise ValueError(f"model has no head for target kind {kind.value!r}") from None

    def init_t2v_from_vtm(self) -> None:
        """Copy the matching head's weights into the retrieval head."""
        with torch.no_grad():
            for dst, src in zip(self.t2v_head.parameters(), self.vtm_head.parameters()):
                dst.copy_(src)


def build_model(
    config: ModelConfig, seed: int | None = None, dtype: torch.dtype = torch.float32
) -> VideoTextModel:
    """Construct and deterministically initialize a model."""
    model = VideoTextModel(config)
    init_parameters(model, config.init_seed if seed is None else seed, config.effective_init_scale)
    return model.to(dtype)
