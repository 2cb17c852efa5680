"""Accuracy evaluation.

The headline score follows the first-K-positions rule: an answer counts as
correct when at least one of its first K positions matches the ground truth
after both sequences are padded to the decoder length cap (multiple choice is
the K=1 case over class ids, restricted to each question's candidate list).
Strict whole-sequence exact match is reported alongside it, since matching
<pad> positions can satisfy the first-K rule on short answers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import QTYPES, VideoInstance
from .errors import ConfigError, ContractError
from .vocab import PAD_ID


def first_k_score(y: Sequence[int], o: Sequence[int], k: int) -> int:
    """1 iff any of the first ``k`` aligned positions of ``y`` and ``o`` match."""
    if len(y) != len(o):
        raise ContractError(f"first_k_score: sequence lengths differ ({len(y)} vs {len(o)})")
    if not 1 <= k <= len(y):
        raise ContractError(f"first_k_score: K={k} outside answer length {len(y)}")
    for i in range(k):
        if y[i] == o[i]:
            return 1
    return 0


def pad_to(ids: Sequence[int], length: int, pad: int = PAD_ID) -> tuple[int, ...]:
    """Pad with ``pad`` (or truncate) to exactly ``length`` positions."""
    clipped = tuple(int(i) for i in ids[:length])
    return clipped + (pad,) * (length - len(clipped))


def exact_match_loss(y: Sequence[int], o: Sequence[int], length: int) -> int:
    """Number of mismatched positions after padding both sequences to ``length``;
    mismatches inside the padded region count. Zero iff the sequences agree on
    every position. Reported as a metric; training optimizes a differentiable
    surrogate instead."""
    yp = pad_to(y, length)
    op = pad_to(o, length)
    return sum(1 for a, b in zip(yp, op) if a != b)


@dataclass
class AccuracyReport:
    """Accuracy overall and per question type, plus the strict variant."""

    task: str
    k: int
    n: int
    overall: float
    by_qtype: dict[str, float | None]
    counts: dict[str, int]
    strict_overall: float
    strict_by_qtype: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "k": self.k,
            "n": self.n,
            "overall": self.overall,
            "by_qtype": dict(self.by_qtype),
            "counts": dict(self.counts),
            "strict_overall": self.strict_overall,
            "strict_by_qtype": dict(self.strict_by_qtype),
        }


def restricted_argmax(probabilities: np.ndarray, candidate_idxs: Sequence[int]) -> int:
    """Highest-probability class among the offered candidates (first wins ties)."""
    if not candidate_idxs:
        raise ContractError("restricted_argmax: empty candidate list")
    best = candidate_idxs[0]
    for idx in candidate_idxs[1:]:
        if probabilities[idx] > probabilities[best]:
            best = idx
    return int(best)


def evaluate_accuracy(model, instances: list[VideoInstance], task: str, k: int = 1) -> AccuracyReport:
    """Score a model over a split.

    Multiple choice compares the candidate-restricted argmax class against
    the ground-truth class (sequences of length 1, so K must be 1). Open
    ended greedy-decodes and compares token sequences padded to the decoder
    length cap; K may range over 1..max_answer_len.
    """
    if task not in ("mc", "oe"):
        raise ConfigError(f"unknown task {task!r} (expected mc or oe)")
    max_len = model.config.max_answer_len
    if task == "mc" and k != 1:
        raise ContractError(f"multiple choice compares single classes; K={k} exceeds length 1")
    if task == "oe" and not 1 <= k <= max_len:
        raise ContractError(f"K={k} outside open-ended answer length {max_len}")

    totals = {q: 0 for q in QTYPES}
    hits = {q: 0 for q in QTYPES}
    strict_hits = {q: 0 for q in QTYPES}
    for inst in instances:
        rows = inst.feature_rows()
        for qa in inst.qa_pairs:
            try:
                if task == "mc":
                    p, _ = model.forward_mc(rows, inst.attribute_ids, qa.question_ids)
                    pred = restricted_argmax(p.values, qa.candidate_idxs)
                    y, o = (qa.class_idx,), (pred,)
                else:
                    tokens, _ = model.answer_open_ended(rows, inst.attribute_ids, qa.question_ids)
                    y = pad_to(qa.answer_ids, max_len)
                    o = pad_to(tokens, max_len)
            except (ValueError, IndexError) as exc:
                raise type(exc)(f"video {inst.video_id}: {exc}") from exc
            totals[qa.qtype] += 1
            hits[qa.qtype] += first_k_score(y, o, k if task == "oe" else 1)
            strict_hits[qa.qtype] += 1 if exact_match_loss(y, o, len(y)) == 0 else 0

    n = sum(totals.values())
    if n == 0:
        raise ConfigError("evaluate_accuracy: no QA pairs in the split")
    by_qtype = {q: (hits[q] / totals[q] if totals[q] else None) for q in QTYPES}
    strict_by = {q: (strict_hits[q] / totals[q] if totals[q] else None) for q in QTYPES}
    return AccuracyReport(
        task=task, k=k, n=n,
        overall=sum(hits.values()) / n,
        by_qtype=by_qtype,
        counts=dict(totals),
        strict_overall=sum(strict_hits.values()) / n,
        strict_by_qtype=strict_by,
    )
