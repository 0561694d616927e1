from .checkpoint import (
    config_hash,
    load_meta,
    load_model,
    read_blob,
    save_model,
    write_blob,
)
from .config import ModelConfig
from .core import AttentionTrace, JointFeatures, VideoTextModel, build_model
from .transformer import Block, Mlp2Head, SelfAttention, init_parameters

__all__ = [
    "AttentionTrace",
    "Block",
    "JointFeatures",
    "Mlp2Head",
    "ModelConfig",
    "SelfAttention",
    "VideoTextModel",
    "build_model",
    "config_hash",
    "init_parameters",
    "load_meta",
    "load_model",
    "read_blob",
    "save_model",
    "write_blob",
]
