"""Model configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import InvalidConfigError
from ..targets.kinds import TargetKind


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden_size: int = 64
    vt_layers: int = 2
    vt_heads: int = 4
    ct_layers: int = 2
    ct_heads: int = 4
    patch_size: int = 16
    frame_size: int = 64
    max_frames: int = 8
    max_text_len: int = 64
    mlp_ratio: float = 4.0
    init_seed: int = 0
    init_scale: float | None = None  # None -> 1/sqrt(hidden_size)
    # MVM head allocation
    mvm_targets: tuple[str, ...] = ()
    mvm_head_kind: str = "mlp"  # "mlp" (default) or "linear"
    codebook_size: int = 64
    teacher_dim: int = 16

    def __post_init__(self):
        if self.hidden_size % self.vt_heads or self.hidden_size % self.ct_heads:
            raise InvalidConfigError("hidden_size must be divisible by the head counts")
        if self.frame_size % self.patch_size:
            raise InvalidConfigError("patch_size must divide frame_size")
        if self.mvm_head_kind not in ("mlp", "linear"):
            raise InvalidConfigError(f"unknown head kind {self.mvm_head_kind!r}")
        for name in self.mvm_targets:
            TargetKind(name)  # raises ValueError on unknown kinds

    @property
    def effective_init_scale(self) -> float:
        # width-scaled truncated normal: small models need proportionally
        # larger weights for attention logits to carry signal from step one
        return self.init_scale if self.init_scale is not None else self.hidden_size**-0.5

    @property
    def grid_size(self) -> int:
        return self.frame_size // self.patch_size

    @property
    def patches_per_frame(self) -> int:
        return self.grid_size * self.grid_size
