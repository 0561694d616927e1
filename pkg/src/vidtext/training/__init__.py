from .config import (
    FINETUNE_TASKS,
    ModelSettings,
    OptimizerSettings,
    RunConfig,
)
from .gradcheck import grad_check
from .loop import (
    Instruments,
    RunResult,
    assemble_batch,
    build_instruments,
    derive_seed,
    evaluate,
    finetune,
    load_instruments,
    pretrain,
    save_instruments,
    total_step_count,
)
from .optim import lr_at, make_optimizer, set_lr
from .sweep import ExperimentTable, SweepGrid, sweep

__all__ = [
    "ExperimentTable",
    "FINETUNE_TASKS",
    "Instruments",
    "ModelSettings",
    "OptimizerSettings",
    "RunConfig",
    "RunResult",
    "SweepGrid",
    "assemble_batch",
    "build_instruments",
    "derive_seed",
    "evaluate",
    "finetune",
    "grad_check",
    "load_instruments",
    "lr_at",
    "make_optimizer",
    "pretrain",
    "save_instruments",
    "set_lr",
    "sweep",
    "total_step_count",
]
