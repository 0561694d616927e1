"""Checkpoint format: JSON config + flat binary parameter blob.

A checkpoint directory holds ``config.json``, one or more named blobs
(``params.bin`` for model weights, ``opt.bin`` for optimizer state) each with
a manifest listing (path, offset, shape), and ``meta.json`` with the step
counter and the config hash used to reject mismatched resumes.  Values are
stored as 64-bit little-endian floats regardless of the runtime dtype, so a
float32 model round-trips exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError
from .config import ModelConfig
from .core import VideoTextModel, build_model


def config_hash(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def write_blob(directory: Path, name: str, arrays: dict[str, np.ndarray]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest, chunks, offset = [], [], 0
    for path, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"path": path, "offset": offset, "shape": list(arr.shape)})
        chunks.append(data)
        offset += len(data)
    (directory / f"{name}.bin").write_bytes(b"".join(chunks))
    (directory / f"{name}.manifest.json").write_text(json.dumps(manifest, indent=1))


def read_blob(directory: Path, name: str) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest_path = directory / f"{name}.manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"no blob {name!r} in {directory}")
    manifest = json.loads(manifest_path.read_text())
    raw = (directory / f"{name}.bin").read_bytes()
    arrays = {}
    for entry in manifest:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["path"]] = arr.reshape(entry["shape"]).copy()
    return arrays


def save_model(
    model: VideoTextModel,
    directory: Path,
    step: int = 0,
    extra_meta: dict | None = None,
    run_config: dict | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = asdict(model.config)
    cfg["mvm_targets"] = list(cfg["mvm_targets"])
    (directory / "config.json").write_text(json.dumps(cfg, indent=2))
    arrays = {
        path: param.detach().cpu().double().numpy()
        for path, param in model.named_parameters()
    }
    write_blob(directory, "params", arrays)
    meta = {"step": step, "model_config_hash": config_hash(cfg)}
    if run_config is not None:
        meta["run_config_hash"] = config_hash(run_config)
    meta.update(extra_meta or {})
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    return directory


def load_model(directory: Path, dtype: torch.dtype = torch.float32) -> VideoTextModel:
    directory = Path(directory)
    try:
        cfg_dict = json.loads((directory / "config.json").read_text())
    except FileNotFoundError:
        raise CheckpointError(f"{directory} is not a checkpoint directory") from None
    cfg_dict["mvm_targets"] = tuple(cfg_dict.get("mvm_targets", ()))
    config = ModelConfig(**cfg_dict)
    model = build_model(config, dtype=dtype)
    arrays = read_blob(directory, "params")
    params = dict(model.named_parameters())
    if set(arrays) != set(params):
        raise CheckpointError("parameter paths do not match the model architecture")
    with torch.no_grad():
        for path, arr in arrays.items():
            if tuple(params[path].shape) != tuple(arr.shape):
                raise CheckpointError(f"shape mismatch for {path}")
            params[path].copy_(torch.from_numpy(arr).to(dtype))
    return model


def load_meta(directory: Path) -> dict:
    return json.loads((Path(directory) / "meta.json").read_text())
