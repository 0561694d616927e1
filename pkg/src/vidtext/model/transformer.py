"""Pre-norm transformer blocks shared by the video and cross-modal encoders."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class SelfAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        assert dim % num_heads == 0
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, allowed=None, need_weights=False):
        """x: (B, S, D); allowed: optional (B, 1, S, S) bool, True = may attend."""
        B, S, D = x.shape
        qkv = self.qkv(x).reshape(B, S, 3, self.num_heads, D // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)  # each (B, h, S, d_h)
        scores = (q @ k.transpose(-2, -1)) * self.scale
        if allowed is not None:
            scores = scores.masked_fill(~allowed, float("-inf"))
        probs = scores.softmax(dim=-1)
        out = (probs @ v).transpose(1, 2).reshape(B, S, D)
        out = self.proj(out)
        return (out, probs) if need_weights else (out, None)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class Block(nn.Module):
    """Pre-norm residual block: x + attn(LN(x)), then x + mlp(LN(x))."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x, allowed=None, need_weights=False):
        attn_out, probs = self.attn(self.norm1(x), allowed=allowed, need_weights=need_weights)
        x = x + attn_out
        x = x + self.mlp(self.norm2(x))
        return x, probs


class Mlp2Head(nn.Module):
    """2-layer MLP prediction head: in -> hidden -> out with GELU."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden)
        self.fc2 = nn.Linear(hidden, out_dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


def init_parameters(module: nn.Module, seed: int, scale: float = 0.02) -> None:
    """Deterministic init: truncated normal (+/-3 sigma) for weights and
    embeddings, zeros for biases, ones for LayerNorm weights.

    Parameters are visited in sorted path order with a single generator so
    the result depends only on (architecture, seed).
    """
    gen = torch.Generator().manual_seed(seed)
    for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if param.dim() == 1 and ("bias" in name or "norm" in name.lower()):
                param.fill_(1.0 if name.endswith("weight") else 0.0)
            else:
                nn.init.trunc_normal_(param, std=scale, a=-3 * scale, b=3 * scale, generator=gen)
