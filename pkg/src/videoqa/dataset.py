"""Dataset schema, manifest IO, and validation.

A dataset on disk is a directory holding one JSON-lines manifest per split
(train.jsonl / valid.jsonl / test.jsonl; missing splits load as empty) plus a
features/ directory with one little-endian float32 row-major [n_frames x
feature_dim] file per video. Attributes and answers are stored as token
strings and resolved to ids against a vocabulary at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import DataError
from .vocab import Vocabulary, build_vocab

QTYPES = ("what", "who", "other")
SPLIT_NAMES = ("train", "valid", "test")


@dataclass
class QAPair:
    """One question about a video, with both answer forms."""

    question: list[str]
    answer: list[str]
    answer_class: str
    candidates: list[str]
    qtype: str
    question_ids: list[int] = field(default_factory=list, repr=False)
    answer_ids: list[int] = field(default_factory=list, repr=False)
    class_idx: int = -1
    candidate_idxs: list[int] = field(default_factory=list, repr=False)


@dataclass
class VideoInstance:
    """Frame features, per-frame attribute token sets, and QA pairs."""

    video_id: str
    features: np.ndarray
    attributes: list[tuple[str, ...]]
    qa_pairs: list[QAPair]
    attribute_ids: list[tuple[int, ...]] = field(default_factory=list, repr=False)
    _rows: list[Tensor] | None = field(default=None, repr=False, compare=False)

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def feature_rows(self) -> list[Tensor]:
        """Per-frame feature vectors as shared constant tensors."""
        if self._rows is None:
            self._rows = [Tensor(self.features[i]) for i in range(self.n_frames)]
        return self._rows

    def validate(self, where: str = "") -> None:
        prefix = f"{where}: " if where else ""
        if self.features.ndim != 2:
            raise DataError(f"{prefix}video {self.video_id}: features must be a matrix")
        if len(self.attributes) != self.n_frames:
            raise DataError(
                f"{prefix}video {self.video_id}: {len(self.attributes)} attribute sets "
                f"for {self.n_frames} frames")
        if not np.all(np.isfinite(self.features)):
            raise DataError(f"{prefix}video {self.video_id}: non-finite feature values")
        for qa in self.qa_pairs:
            if qa.qtype not in QTYPES:
                raise DataError(
                    f"{prefix}video {self.video_id}: unknown qtype {qa.qtype!r} "
                    f"(expected one of {QTYPES})")
            if not qa.question:
                raise DataError(f"{prefix}video {self.video_id}: empty question")
            if not qa.answer:
                raise DataError(f"{prefix}video {self.video_id}: empty answer")
            if not qa.candidates:
                raise DataError(f"{prefix}video {self.video_id}: empty candidate list")


def check_instances(instances: Sequence[VideoInstance],
                    n_frames: int | None = None,
                    frame_dim: int | None = None) -> tuple[int, int]:
    """Validate per-instance invariants and cross-instance shape uniformity.

    Returns the common (n_frames, frame_dim). Expected values may be pinned
    by the caller; otherwise they are taken from the first instance.
    """
    if not instances:
        raise DataError("no instances to check")
    for inst in instances:
        inst.validate()
        if n_frames is None:
            n_frames, frame_dim = inst.n_frames, inst.feature_dim
        elif (inst.n_frames, inst.feature_dim) != (n_frames, frame_dim):
            raise DataError(
                f"video {inst.video_id}: features are {inst.n_frames}x{inst.feature_dim}, "
                f"expected {n_frames}x{frame_dim}")
    return n_frames, frame_dim


@dataclass
class DatasetSplit:
    """Train/valid/test instances sharing one vocabulary and class list."""

    train: list[VideoInstance]
    valid: list[VideoInstance]
    test: list[VideoInstance]
    vocab: Vocabulary
    answer_classes: list[str]
    n_frames: int
    frame_dim: int

    def split(self, name: str) -> list[VideoInstance]:
        if name not in SPLIT_NAMES:
            raise DataError(f"unknown split {name!r}")
        return getattr(self, name)

    def examples(self, name: str) -> list[tuple[VideoInstance, QAPair]]:
        return [(inst, qa) for inst in self.split(name) for qa in inst.qa_pairs]

    def class_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.answer_classes)}


def token_streams(instances: Iterable[VideoInstance]) -> Iterator[list[str]]:
    for inst in instances:
        for attrs in inst.attributes:
            yield list(attrs)
        for qa in inst.qa_pairs:
            yield qa.question
            yield qa.answer
            yield [qa.answer_class, *qa.candidates]


def resolve_instances(instances: Iterable[VideoInstance], vocab: Vocabulary,
                      class_to_idx: dict[str, int]) -> None:
    """Fill token-id and class-index fields in place; idempotent."""
    for inst in instances:
        inst.attribute_ids = [tuple(sorted(set(vocab.encode(attrs))))
                              for attrs in inst.attributes]
        for qa in inst.qa_pairs:
            qa.question_ids = vocab.encode(qa.question)
            qa.answer_ids = vocab.encode(qa.answer)
            missing = [c for c in [qa.answer_class, *qa.candidates] if c not in class_to_idx]
            if missing:
                raise DataError(
                    f"video {inst.video_id}: answer classes {missing} not in the class list")
            qa.class_idx = class_to_idx[qa.answer_class]
            qa.candidate_idxs = [class_to_idx[c] for c in qa.candidates]


# ---------------------------------------------------------------------------
# manifest reading


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise DataError(f"{where}: missing field {key!r}")
    return obj[key]


def read_manifest(path: str | Path) -> list[VideoInstance]:
    """Parse one JSON-lines manifest and load the referenced feature files."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc.msg})") from exc
            instances.append(_parse_instance(obj, base, where))
    return instances


def _parse_instance(obj: dict, base: Path, where: str) -> VideoInstance:
    video_id = str(_require(obj, "video_id", where))
    n_frames = int(_require(obj, "n_frames", where))
    feature_dim = int(_require(obj, "feature_dim", where))
    feature_file = base / str(_require(obj, "feature_file", where))
    if not feature_file.exists():
        raise DataError(f"{where}: video {video_id}: feature file not found: {feature_file}")
    raw = np.fromfile(feature_file, dtype="<f4")
    if raw.size != n_frames * feature_dim:
        raise DataError(
            f"{where}: video {video_id}: feature file holds {raw.size} floats, "
            f"expected {n_frames}x{feature_dim}={n_frames * feature_dim}")
    features = raw.astype(np.float64).reshape(n_frames, feature_dim)

    attributes_raw = _require(obj, "attributes", where)
    attributes = [tuple(str(t) for t in frame) for frame in attributes_raw]
    qa_pairs = []
    for q in _require(obj, "qa", where):
        qa_pairs.append(QAPair(
            question=[str(t) for t in _require(q, "q", where)],
            answer=[str(t) for t in _require(q, "a", where)],
            answer_class=str(_require(q, "answer_class", where)),
            candidates=[str(t) for t in _require(q, "candidates", where)],
            qtype=str(_require(q, "qtype", where)),
        ))
    inst = VideoInstance(video_id, features, attributes, qa_pairs)
    inst.validate(where)
    return inst


def load_dataset(root: str | Path, vocab: Vocabulary | None = None,
                 max_vocab: int = 6500,
                 answer_classes: list[str] | None = None) -> DatasetSplit:
    """Load a dataset directory; splits absent on disk come back empty.

    When no vocabulary is given, one is built from every split's question,
    answer, attribute, and candidate tokens.
    """
    root = Path(root)
    if not root.exists():
        raise DataError(f"dataset directory not found: {root}")
    parts: dict[str, list[VideoInstance]] = {}
    for name in SPLIT_NAMES:
        manifest = root / f"{name}.jsonl"
        parts[name] = read_manifest(manifest) if manifest.exists() else []

    everything = [inst for name in SPLIT_NAMES for inst in parts[name]]
    seen: dict[str, str] = {}
    for name in SPLIT_NAMES:
        for inst in parts[name]:
            if inst.video_id in seen and seen[inst.video_id] != name:
                raise DataError(
                    f"video {inst.video_id} appears in both {seen[inst.video_id]} and {name}")
            seen[inst.video_id] = name

    if everything:
        n_frames, frame_dim = check_instances(everything)
    else:
        n_frames, frame_dim = 0, 0

    if vocab is None:
        vocab = build_vocab(token_streams(everything), max_vocab)
    if answer_classes is None:
        labels = set()
        for inst in everything:
            for qa in inst.qa_pairs:
                labels.add(qa.answer_class)
                labels.update(qa.candidates)
        answer_classes = sorted(labels)
    split = DatasetSplit(parts["train"], parts["valid"], parts["test"],
                         vocab, answer_classes, n_frames, frame_dim)
    resolve_instances(everything, vocab, split.class_index())
    return split


# ---------------------------------------------------------------------------
# manifest writing


def _instance_record(inst: VideoInstance, feature_file: str) -> dict:
    return {
        "video_id": inst.video_id,
        "feature_file": feature_file,
        "n_frames": inst.n_frames,
        "feature_dim": inst.feature_dim,
        "attributes": [list(a) for a in inst.attributes],
        "qa": [{
            "q": qa.question,
            "a": qa.answer,
            "answer_class": qa.answer_class,
            "candidates": qa.candidates,
            "qtype": qa.qtype,
        } for qa in inst.qa_pairs],
    }


def write_dataset(split: DatasetSplit, out_dir: str | Path) -> None:
    """Write manifests and feature files; features are stored as little-endian
    float32, so in-memory values must already be float32-representable for the
    round trip to be value-exact."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        with open(out / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for inst in split.split(name):
                feature_file = f"features/{inst.video_id}.bin"
                with open(out / feature_file, "wb") as bf:
                    bf.write(np.ascontiguousarray(inst.features, dtype="<f4").tobytes())
                fh.write(json.dumps(_instance_record(inst, feature_file)) + "\n")
