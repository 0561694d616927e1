"""Grid sweeps replicating the study protocol at toy scale.

Cells share the corpus and seed; each cell pre-trains a model under its
config delta and reports zero-shot retrieval on the validation split next to
the final pre-training losses.  A baseline cell (no masked visual modeling)
is always present so per-cell deltas are meaningful.  Failures are isolated:
an erroring cell becomes an error row, the rest of the grid completes.
"""

from __future__ import annotations

import dataclasses
import json
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from ..model.checkpoint import config_hash
from .config import RunConfig
from .loop import evaluate, pretrain

BASELINE = "baseline"


@dataclass(frozen=True)
class SweepGrid:
    base: RunConfig
    targets: tuple = (None, ("pixel",), ("sif",))  # None = no MVM (baseline)
    masking: tuple = ()  # tuples of strategies; empty = keep base
    ratios: tuple = ()
    loss_kinds: tuple = ()
    head_kinds: tuple = ()

    def cells(self) -> list[dict]:
        """One baseline cell (no MVM), then the full product of the MVM axes."""
        axes = {
            "mvm_targets": [t for t in self.targets if t is not None] or [("pixel",)],
            "masking": list(self.masking) or [None],
            "mask_ratio": list(self.ratios) or [None],
            "mvm_loss": list(self.loss_kinds) or [None],
            "mvm_head_kind": list(self.head_kinds) or [None],
        }
        cells = [{}]
        for key, options in axes.items():
            cells = [dict(c, **{key: o}) for c in cells for o in options]
        cells = [{k: v for k, v in cell.items() if v is not None} for cell in cells]
        return [{"mvm_targets": None}] + cells


@dataclass
class ExperimentTable:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def render(self) -> str:
        widths = {c: max(len(c), *(len(_fmt(r.get(c))) for r in self.rows)) for c in self.columns}
        header = "  ".join(c.ljust(widths[c]) for c in self.columns)
        sep = "  ".join("-" * widths[c] for c in self.columns)
        lines = [header, sep]
        for row in self.rows:
            lines.append("  ".join(_fmt(row.get(c)).ljust(widths[c]) for c in self.columns))
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"columns": self.columns, "rows": self.rows}, indent=2)


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _cell_config(base: RunConfig, cell: dict) -> RunConfig:
    changes = dict(cell)
    targets = changes.pop("mvm_targets")
    if targets is None:
        tasks = tuple(t for t in base.tasks if t != "mvm")
        changes.update(tasks=tasks, mvm_targets=())
    else:
        tasks = base.tasks if "mvm" in base.tasks else tuple(base.tasks) + ("mvm",)
        changes.update(tasks=tasks, mvm_targets=tuple(targets))
    if "masking" in changes:
        changes["masking"] = tuple(changes["masking"])
    return dataclasses.replace(base, **changes)


def _cell_label(cell: dict) -> str:
    targets = cell.get("mvm_targets")
    label = BASELINE if targets is None else "+".join(targets)
    extras = [f"{k}={v}" for k, v in cell.items() if k != "mvm_targets"]
    return " ".join([label] + extras)


def sweep(grid: SweepGrid, out_dir: Path) -> ExperimentTable:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = ["cell", "status", "recall_at_1", "recall_at_5", "mvm_loss", "vtm_loss", "mlm_loss", "delta_r1", "run_id", "config_hash"]
    table = ExperimentTable(columns=columns)
    baseline_r1 = None
    for i, cell in enumerate(grid.cells()):
        label = _cell_label(cell)
        run_dir = out / f"cell_{i:03d}"
        row = {"cell": label, "run_id": run_dir.name}
        try:
            cfg = _cell_config(grid.base, cell)
            row["config_hash"] = config_hash(cfg.to_dict())
            result = pretrain(cfg, run_dir)
            retrieval = evaluate(result.checkpoint_dir, "retrieval", "val", cfg)["metrics"]
            row.update(
                status="ok",
                recall_at_1=retrieval.get("recall_at_1"),
                recall_at_5=retrieval.get("recall_at_5"),
                mvm_loss=result.final_report.get("mvm") if cell.get("mvm_targets") else None,
                vtm_loss=result.final_report.get("vtm"),
                mlm_loss=result.final_report.get("mlm"),
            )
            if cell.get("mvm_targets") is None and baseline_r1 is None:
                baseline_r1 = row.get("recall_at_1")
            if baseline_r1 is not None and row.get("recall_at_1") is not None:
                row["delta_r1"] = row["recall_at_1"] - baseline_r1
        except Exception as exc:  # cell isolation: record and continue
            row.update(status=f"error: {exc}")
            (run_dir / "error.txt").parent.mkdir(parents=True, exist_ok=True)
            (run_dir / "error.txt").write_text(traceback.format_exc())
        table.rows.append(row)
    (out / "sweep.json").write_text(table.to_json())
    (out / "sweep.txt").write_text(table.render())
    return table
