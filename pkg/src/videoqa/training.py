"""Losses, the regularized objective, diagonal AdaGrad, and the training loop.

The whole-sequence mismatch count is reported as a metric but is not
differentiable, so open-ended training optimizes teacher-forced per-position
cross-entropy instead; multiple choice trains plain class cross-entropy.
Training is sequential instance-level SGD with per-epoch seeded shuffling,
validation after every epoch, and best-validation parameter keeping.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .dataset import DatasetSplit, QAPair, VideoInstance
from .errors import ConfigError, DataError, DimensionError, TrainingDiverged
from .metrics import AccuracyReport, evaluate_accuracy
from .model import ModelConfig, ModelParams, VideoQAModel
from .vocab import EOS_ID

TASKS = ("mc", "oe")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    adagrad_eps: float = 1e-8
    l2: float = 1e-4
    epochs: int = 30
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.adagrad_eps <= 0:
            raise ConfigError(f"adagrad_eps must be > 0, got {self.adagrad_eps}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if self.epochs < 0 or self.patience < 1:
            raise ConfigError("epochs must be >= 0 and patience >= 1")


# ---------------------------------------------------------------------------
# losses and objective


def surrogate_loss_oe(logits_seq: Sequence[Tensor], target_ids: Sequence[int]) -> Tensor:
    """Sum of per-position cross-entropies under teacher forcing."""
    if len(logits_seq) != len(target_ids):
        raise DimensionError(
            f"surrogate_loss_oe: {len(logits_seq)} logit vectors for {len(target_ids)} targets")
    if not logits_seq:
        raise DimensionError("surrogate_loss_oe: empty sequence")
    total = ad.cross_entropy(logits_seq[0], target_ids[0])
    for logits, target in zip(logits_seq[1:], target_ids[1:]):
        total = ad.add(total, ad.cross_entropy(logits, target))
    return total


def objective(loss: Tensor, params, lam: float) -> Tensor:
    """loss + lam * sum of squared parameter entries, embeddings included.

    A single fused tape node: backward adds 2*lam*theta to each parameter
    gradient on top of the loss gradient.
    """
    tensors = params.tensors() if hasattr(params, "tensors") else list(params)
    reg = 0.0
    if lam:
        reg = lam * sum(float(np.dot(t.values.reshape(-1), t.values.reshape(-1)))
                        for t in tensors)
    out, tape = ad.op_output(np.array([loss.values[0] + reg]), (loss, *tensors))
    if tape is not None:
        def bw():
            g = out.grad[0]
            if loss.grad is not None:
                loss.grad[0] += g
            if lam:
                two_lam_g = 2.0 * lam * g
                for t in tensors:
                    if t.grad is not None:
                        t.grad += two_lam_g * t.values
        tape.record(bw)
    return out


class AdaGrad:
    """Diagonal AdaGrad: acc += g^2; theta -= lr * g / (sqrt(acc) + eps)."""

    def __init__(self, tensors: Iterable[Tensor], learning_rate: float = 0.01,
                 eps: float = 1e-8):
        if learning_rate <= 0 or eps <= 0:
            raise ConfigError("AdaGrad needs learning_rate > 0 and eps > 0")
        self.tensors = list(tensors)
        for t in self.tensors:
            if t.grad is None:
                raise ConfigError("AdaGrad can only drive tensors with gradient slots")
        self.accumulators = [np.zeros_like(t.values) for t in self.tensors]
        self.learning_rate = learning_rate
        self.eps = eps

    def step(self) -> None:
        for t, acc in zip(self.tensors, self.accumulators):
            g = t.grad
            acc += g * g
            t.values -= self.learning_rate * g / (np.sqrt(acc) + self.eps)


# ---------------------------------------------------------------------------
# per-example losses


def oe_targets(qa: QAPair, max_len: int) -> list[int]:
    """Teacher-forcing targets: answer tokens then <eos>, capped at max_len."""
    return (list(qa.answer_ids) + [EOS_ID])[:max_len]


def example_loss(model: VideoQAModel, inst: VideoInstance, qa: QAPair, task: str) -> Tensor:
    rows = inst.feature_rows()
    try:
        if task == "mc":
            logits, _ = model.mc_logits(rows, inst.attribute_ids, qa.question_ids)
            return ad.cross_entropy(logits, qa.class_idx)
        targets = oe_targets(qa, model.config.max_answer_len)
        logits_seq, _ = model.forward_oe(rows, inst.attribute_ids, qa.question_ids, targets)
        return surrogate_loss_oe(logits_seq, targets)
    except (ValueError, IndexError) as exc:
        raise type(exc)(f"video {inst.video_id}: {exc}") from exc


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainReport:
    """Loss curve, validation history, and where the best parameters came from."""

    task: str
    epochs_run: int
    steps: int
    loss_curve: list[tuple[int, int, float, float | None]]
    val_history: list[float]
    best_epoch: int
    best_val_accuracy: float | None
    initial_valid: AccuracyReport | None
    final_valid: AccuracyReport | None
    wall_clock_s: float

    def curve_csv(self) -> str:
        lines = ["step,epoch,loss,val_accuracy"]
        for step, epoch, loss, val in self.loss_curve:
            tail = repr(val) if val is not None else ""
            lines.append(f"{step},{epoch},{loss!r},{tail}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "epochs_run": self.epochs_run,
            "steps": self.steps,
            "val_history": self.val_history,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "initial_valid": self.initial_valid.to_dict() if self.initial_valid else None,
            "final_valid": self.final_valid.to_dict() if self.final_valid else None,
            "wall_clock_s": self.wall_clock_s,
        }


def train(model: VideoQAModel, split: DatasetSplit, config: TrainConfig | None = None,
          task: str = "mc") -> TrainReport:
    """Sequential SGD over shuffled instances; keeps the best-validation
    parameters (loaded back into the model before returning)."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r} (expected one of {TASKS})")
    config = config or TrainConfig()
    examples = split.examples("train")
    if not examples:
        raise DataError("train: empty training split")
    has_valid = bool(split.valid)

    rng = np.random.default_rng(config.seed)
    tensors = model.params.tensors()
    optimizer = AdaGrad(tensors, config.learning_rate, config.adagrad_eps)

    start = time.monotonic()
    initial_valid = evaluate_accuracy(model, split.valid, task, k=1) if has_valid else None
    best_snapshot = model.params.snapshot()
    best_acc = initial_valid.overall if has_valid else None
    best_epoch = 0
    stale = 0

    curve: list[tuple[int, int, float, float | None]] = []
    val_history: list[float] = []
    step = 0
    epochs_run = 0
    for epoch in range(1, config.epochs + 1):
        epochs_run = epoch
        order = rng.permutation(len(examples))
        for idx in order:
            inst, qa = examples[idx]
            ad.zero_grads(tensors)
            with Tape() as tape:
                loss = example_loss(model, inst, qa, task)
                obj = objective(loss, tensors, config.l2)
            loss_val = loss.item()
            if not math.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss at step {step + 1} (epoch {epoch}, video {inst.video_id})")
            tape.backward(obj)
            optimizer.step()
            step += 1
            curve.append((step, epoch, loss_val, None))
        if has_valid:
            report = evaluate_accuracy(model, split.valid, task, k=1)
            val_history.append(report.overall)
            s, e, l, _ = curve[-1]
            curve[-1] = (s, e, l, report.overall)
            if report.overall > best_acc:
                best_acc = report.overall
                best_snapshot = model.params.snapshot()
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
        else:
            best_snapshot = model.params.snapshot()
            best_epoch = epoch

    model.params.load_snapshot(best_snapshot)
    final_valid = evaluate_accuracy(model, split.valid, task, k=1) if has_valid else None
    return TrainReport(
        task=task,
        epochs_run=epochs_run,
        steps=step,
        loss_curve=curve,
        val_history=val_history,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
        initial_valid=initial_valid,
        final_valid=final_valid,
        wall_clock_s=time.monotonic() - start,
    )


# ---------------------------------------------------------------------------
# whole-model gradient verification


def random_check_example(config: ModelConfig, seed: int = 0):
    """A deterministic random example sized for ``config``; features, per-frame
    attribute id sets, question ids, a class target, and decoder targets."""
    rng = np.random.default_rng(seed)
    rows = [Tensor(rng.normal(0, 0.5, config.frame_dim)) for _ in range(config.n_frames)]
    attrs = []
    for _ in range(config.n_frames):
        k = int(rng.integers(0, 3))
        ids = rng.choice(np.arange(4, config.vocab_size), size=k, replace=False)
        attrs.append(tuple(sorted(int(i) for i in ids)))
    question = [int(i) for i in rng.integers(4, config.vocab_size, size=3)]
    target_class = int(rng.integers(0, config.n_classes))
    answer_token = int(rng.integers(4, config.vocab_size))
    return rows, attrs, question, target_class, [answer_token, EOS_ID]


def full_model_grad_check(config: ModelConfig, task: str = "mc", lam: float = 0.0,
                          eps: float = 1e-5, tol: float = 1e-4,
                          seed: int = 0) -> ad.GradCheckReport:
    """Central-difference check of the end-to-end objective gradient.

    All parameters are flattened into one vector; the forward pass rebuilds
    them as slices of that vector so the analytic gradient of every tensor is
    compared against finite differences in a single sweep.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r} (expected one of {TASKS})")
    model = VideoQAModel.initialize(config, seed=seed)
    rows, attrs, question, target_class, targets = random_check_example(config, seed + 1)

    def f(flat: Tensor) -> Tensor:
        params = ModelParams.from_vector(config, flat)
        probe = VideoQAModel(config, params)
        if task == "mc":
            logits, _ = probe.mc_logits(rows, attrs, question)
            loss = ad.cross_entropy(logits, target_class)
        else:
            logits_seq, _ = probe.forward_oe(rows, attrs, question, targets)
            loss = surrogate_loss_oe(logits_seq, targets)
        return objective(loss, params, lam)

    return ad.grad_check(f, Tensor(model.params.flatten()), eps=eps, tol=tol)
