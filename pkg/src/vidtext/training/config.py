"""Run configuration: strict schema over nested dataclasses.

``RunConfig.from_dict`` rejects unknown keys anywhere in the tree so config
typos fail before any compute.  The canonical dict form feeds the config hash
embedded in every artifact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from ..errors import InvalidConfigError
from ..model.config import ModelConfig
from ..synth.corpus import CorpusConfig
from ..targets.kinds import TargetKind

TASKS = ("vtm", "mlm", "mvm")
STRATEGIES = ("random", "blockwise", "attended")
FINETUNE_TASKS = ("retrieval", "qa_mc", "qa_open", "qa_fib", "captioning")


@dataclass(frozen=True)
class ModelSettings:
    hidden_size: int = 64
    vt_layers: int = 2
    vt_heads: int = 4
    ct_layers: int = 2
    ct_heads: int = 4
    patch_size: int = 16
    max_text_len: int = 64
    mlp_ratio: float = 4.0
    init_scale: float | None = None  # None -> width-scaled (1/sqrt(hidden))


@dataclass(frozen=True)
class OptimizerSettings:
    peak_lr: float = 5e-5
    betas: tuple[float, float] = (0.9, 0.98)
    weight_decay: float = 1e-3
    warmup_fraction: float = 0.1
    grad_clip: float | None = 1.0
    # overfit runs raise this: the matching loss starts with near-cancelling
    # gradients at the scalar head, a larger step there breaks the symmetry
    matching_head_lr_multiplier: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    corpus: CorpusConfig = field(default_factory=lambda: CorpusConfig(size=64))
    model: ModelSettings = field(default_factory=ModelSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    tasks: tuple[str, ...] = ("vtm", "mlm", "mvm")
    mvm_targets: tuple[str, ...] = ("pixel",)
    mvm_loss: str = "l1"
    mvm_head_kind: str = "mlp"
    masking: tuple[str, ...] = ("random", "blockwise")
    mask_ratio: float = 0.30
    mlm_ratio: float = 0.15
    frames_per_sample: int = 4
    crop: int | None = None
    epochs: int = 5
    steps: int | None = None  # overrides epochs when set
    batch_size: int = 8
    seed: int = 0
    codebook_size: int = 64
    teacher_dim: int = 16
    hog_bins: int = 9
    hog_cell: int = 8
    num_negatives: int | None = None
    views_per_clip: int = 1  # batch replication: several mask/corruption draws per clip
    mvm_on_image_data: bool = False
    freeze_backbone: bool = False

    def validate(self) -> None:
        self.corpus.validate()
        for task in self.tasks:
            if task not in TASKS:
                raise InvalidConfigError(f"unknown task {task!r}")
        for name in self.mvm_targets:
            try:
                TargetKind(name)
            except ValueError:
                raise InvalidConfigError(f"unknown MVM target {name!r}") from None
        for strategy in self.masking:
            if strategy not in STRATEGIES:
                raise InvalidConfigError(f"unknown masking strategy {strategy!r}")
        if not self.masking:
            raise InvalidConfigError("at least one masking strategy required")
        if self.mvm_loss not in ("l1", "l2"):
            raise InvalidConfigError(f"mvm_loss must be l1 or l2, got {self.mvm_loss!r}")
        if self.mvm_head_kind not in ("mlp", "linear"):
            raise InvalidConfigError(f"mvm_head_kind must be mlp or linear")
        if not 0 < self.mask_ratio < 1:
            raise InvalidConfigError("mask_ratio must be in (0, 1)")
        if not 0 <= self.mlm_ratio < 1:
            raise InvalidConfigError("mlm_ratio must be in [0, 1)")
        if self.frames_per_sample > self.corpus.frame_count:
            raise InvalidConfigError("frames_per_sample exceeds the cached frame count")
        if self.effective_crop > self.corpus.canvas_size:
            raise InvalidConfigError("crop exceeds canvas size")
        if self.effective_crop % self.model.patch_size:
            raise InvalidConfigError("patch size must divide the crop size")
        if "flow" in self.mvm_targets and self.frames_per_sample < 2:
            raise InvalidConfigError("flow targets need at least 2 sampled frames")
        if self.model.patch_size % self.hog_cell and "hog" in self.mvm_targets:
            raise InvalidConfigError("hog cell must divide the patch size")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.views_per_clip < 1:
            raise InvalidConfigError("views_per_clip must be >= 1")

    @property
    def effective_crop(self) -> int:
        return self.crop if self.crop is not None else self.corpus.canvas_size

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            hidden_size=self.model.hidden_size,
            vt_layers=self.model.vt_layers,
            vt_heads=self.model.vt_heads,
            ct_layers=self.model.ct_layers,
            ct_heads=self.model.ct_heads,
            patch_size=self.model.patch_size,
            frame_size=self.effective_crop,
            max_frames=self.frames_per_sample,
            max_text_len=self.model.max_text_len,
            mlp_ratio=self.model.mlp_ratio,
            init_scale=self.model.init_scale,
            init_seed=self.seed,
            mvm_targets=self.mvm_targets if "mvm" in self.tasks else (),
            mvm_head_kind=self.mvm_head_kind,
            codebook_size=self.codebook_size,
            teacher_dim=self.teacher_dim,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        config = _build(cls, data, path="")
        config.validate()
        return config


_NESTED = {"corpus": CorpusConfig, "model": ModelSettings, "optimizer": OptimizerSettings}


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise InvalidConfigError(f"expected an object at {path or 'root'}")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfigError(f"unknown config key(s) {sorted(unknown)} at {path or 'root'}")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        if cls is RunConfig and name in _NESTED:
            kwargs[name] = _build(_NESTED[name], value, sub)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from None
