"""Checkpoint save/load.

A checkpoint is one JSON document holding the model configuration, every
named parameter tensor (name, shape, row-major values), the vocabulary, the
answer-class list, and a format version. Floats are serialized with Python's
shortest round-trip repr, so save -> load is value-exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import DataError
from .model import ModelConfig, ModelParams, VideoQAModel
from .vocab import Vocabulary

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: VideoQAModel, vocab: Vocabulary,
                    answer_classes: list[str]) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "vocabulary": vocab.to_list(),
        "answer_classes": list(answer_classes),
        "params": {
            name: {"shape": list(t.shape), "values": t.values.reshape(-1).tolist()}
            for name, t in model.params.named()
        },
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[VideoQAModel, Vocabulary, list[str]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON ({exc.msg})") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"checkpoint {path}: format version {version!r}, expected {FORMAT_VERSION}")
    for key in ("config", "vocabulary", "answer_classes", "params"):
        if key not in doc:
            raise DataError(f"checkpoint {path}: missing section {key!r}")

    try:
        config = ModelConfig(**doc["config"])
    except TypeError as exc:
        raise DataError(f"checkpoint {path}: bad config section ({exc})") from exc
    tensors = {}
    for name, entry in doc["params"].items():
        shape = tuple(int(e) for e in entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64).reshape(shape)
        tensors[name] = Tensor(values, requires_grad=True)
    params = ModelParams(config, tensors)
    vocab = Vocabulary.from_list([str(t) for t in doc["vocabulary"]])
    classes = [str(c) for c in doc["answer_classes"]]
    return VideoQAModel(config, params), vocab, classes
