"""Ablation harness: train and score model variants on shared seeds.

Variants: ranl1/ranl2/ranl3 vary the reasoning depth, ranl-a switches off
attribute fusion, and vqa+ is the no-attention baseline that mean-pools the
raw frame features, projects them, and gates the question representation by
elementwise product. The grid reports the first-K accuracy per question type
and task, with medians across seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import QTYPES, DatasetSplit
from .errors import ConfigError
from .metrics import AccuracyReport, evaluate_accuracy
from .model import ModelConfig, VideoQAModel
from .training import TrainConfig, TrainReport, train

VARIANTS = ("ranl-a", "ranl1", "ranl2", "ranl3", "vqa+")


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
    if name == "ranl-a":
        return base.variant(use_attributes=False, mean_pool_baseline=False)
    if name == "vqa+":
        return base.variant(mean_pool_baseline=True)
    if name.startswith("ranl") and name[4:].isdigit():
        return base.variant(reasoning_steps=int(name[4:]), use_attributes=True,
                            mean_pool_baseline=False)
    raise ConfigError(f"unknown variant {name!r} (expected one of {VARIANTS})")


@dataclass
class VariantRun:
    variant: str
    seed: int
    task: str
    valid: AccuracyReport | None = None
    test: AccuracyReport | None = None
    best_epoch: int = 0
    epochs_run: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "task": self.task,
            "valid": self.valid.to_dict() if self.valid else None,
            "test": self.test.to_dict() if self.test else None,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "error": self.error,
        }


@dataclass
class AblationReport:
    variants: list[str]
    seeds: list[int]
    tasks: list[str]
    runs: list[VariantRun] = field(default_factory=list)

    def _accuracies(self, variant: str, task: str, split: str) -> list[AccuracyReport]:
        return [getattr(r, split) for r in self.runs
                if r.variant == variant and r.task == task and r.error is None
                and getattr(r, split) is not None]

    def median(self, variant: str, task: str, split: str = "valid",
               qtype: str | None = None) -> float | None:
        reports = self._accuracies(variant, task, split)
        values = [(r.overall if qtype is None else r.by_qtype.get(qtype)) for r in reports]
        values = [v for v in values if v is not None]
        return float(np.median(values)) if values else None

    def seed_values(self, variant: str, task: str, split: str = "valid") -> list[float]:
        return [r.overall for r in self._accuracies(variant, task, split)]

    def grid(self, split: str = "valid") -> dict:
        out: dict = {}
        for variant in self.variants:
            cell: dict = {}
            for task in self.tasks:
                cell[task] = {
                    "total": self.median(variant, task, split),
                    **{q: self.median(variant, task, split, qtype=q) for q in QTYPES},
                    "per_seed_total": self.seed_values(variant, task, split),
                }
            out[variant] = cell
        return out

    def to_dict(self) -> dict:
        return {
            "variants": list(self.variants),
            "seeds": list(self.seeds),
            "tasks": list(self.tasks),
            "grid": {split: self.grid(split) for split in ("valid", "test")},
            "runs": [r.to_dict() for r in self.runs],
        }

    def format_table(self, split: str = "valid") -> str:
        def fmt(v):
            return f"{v:.3f}" if v is not None else "  -  "

        columns = [(task, q) for task in self.tasks for q in (*QTYPES, "total")]
        header = "variant".ljust(10) + "".join(f"{t}:{q}".rjust(11) for t, q in columns)
        lines = [f"[{split} split]", header, "-" * len(header)]
        for variant in self.variants:
            row = variant.ljust(10)
            for task, q in columns:
                value = self.median(variant, task, split) if q == "total" \
                    else self.median(variant, task, split, qtype=q)
                row += fmt(value).rjust(11)
            lines.append(row)
        return "\n".join(lines) + "\n"


def run_ablation(split: DatasetSplit, base_config: ModelConfig,
                 train_config: TrainConfig | None = None,
                 variants: tuple[str, ...] = VARIANTS,
                 seeds: tuple[int, ...] = (0, 1, 2),
                 tasks: tuple[str, ...] = ("mc", "oe"),
                 evaluate_test: bool = True) -> AblationReport:
    """Train every (variant, seed, task) combination on shared seeds.

    A failing run is recorded with its error message and does not abort the
    remaining runs.
    """
    train_config = train_config or TrainConfig()
    for name in variants:
        variant_config(base_config, name)  # fail fast on unknown names
    report = AblationReport(list(variants), list(seeds), list(tasks))
    for variant in variants:
        config = variant_config(base_config, variant)
        for seed in seeds:
            for task in tasks:
                run = VariantRun(variant, seed, task)
                try:
                    model = VideoQAModel.initialize(config, seed=seed)
                    cfg = TrainConfig(
                        learning_rate=train_config.learning_rate,
                        adagrad_eps=train_config.adagrad_eps,
                        l2=train_config.l2,
                        epochs=train_config.epochs,
                        patience=train_config.patience,
                        seed=seed,
                    )
                    result: TrainReport = train(model, split, cfg, task)
                    run.valid = result.final_valid
                    run.best_epoch = result.best_epoch
                    run.epochs_run = result.epochs_run
                    if evaluate_test and split.test:
                        run.test = evaluate_accuracy(model, split.test, task, k=1)
                except Exception as exc:  # noqa: BLE001 - isolation is the contract
                    run.error = f"{type(exc).__name__}: {exc}"
                report.runs.append(run)
    return report
