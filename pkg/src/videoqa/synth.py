"""Synthetic planted-rule datasets.

Frame features are pure noise; the answer is carried entirely by attribute
tokens planted at random frames, so attribute ablations are diagnostic and a
rule-reading oracle can label every instance perfectly. One-hop rules map a
single planted attribute to the answer class; two-hop rules key the answer
to a pair of attributes planted at two distinct frames, one from each of two
disjoint families, so neither frame alone determines the answer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import DatasetSplit, QAPair, VideoInstance, resolve_instances, token_streams
from .errors import ConfigError, DataError
from .vocab import build_vocab

FILLERS = tuple(f"w{i}" for i in range(10))
DISTRACTORS = tuple(f"obj{i}" for i in range(8))
CUES = (("what", "what"), ("who", "who"), ("where", "other"))
SPLIT_FRACTIONS = (0.889, 0.065, 0.046)  # train / valid / test


@dataclass(frozen=True)
class PlantedRule:
    """Ground-truth mapping from planted attributes to the answer class."""

    kind: str
    answers: tuple[str, ...]
    signal_attrs: tuple[str, ...]
    second_attrs: tuple[str, ...]
    class_to_signals: tuple[tuple[str, ...], ...]

    @property
    def n_classes(self) -> int:
        return len(self.answers)

    @classmethod
    def one_hop(cls, n_classes: int = 8, seed: int = 0) -> "PlantedRule":
        if n_classes < 2:
            raise ConfigError("one-hop rule needs at least 2 classes")
        rng = np.random.default_rng(seed)
        signals = tuple(f"sig{i}" for i in range(n_classes))
        answers = tuple(f"ans{i}" for i in range(n_classes))
        perm = rng.permutation(n_classes)
        # class c is answered by answers[c]; its cue attribute is signals[perm^-1(c)]
        class_to_signals = tuple((signals[int(np.where(perm == c)[0][0])],)
                                 for c in range(n_classes))
        return cls("one-hop", answers, signals, (), class_to_signals)

    @classmethod
    def two_hop(cls, n_first: int = 2, n_second: int = 2, seed: int = 0) -> "PlantedRule":
        if n_first < 2 or n_second < 2:
            raise ConfigError("two-hop rule needs at least 2 attributes per family")
        rng = np.random.default_rng(seed)
        first = tuple(f"siga{i}" for i in range(n_first))
        second = tuple(f"sigb{j}" for j in range(n_second))
        n_classes = n_first * n_second
        answers = tuple(f"ans{i}" for i in range(n_classes))
        perm = rng.permutation(n_classes)
        class_to_signals = [None] * n_classes
        for i in range(n_first):
            for j in range(n_second):
                class_to_signals[int(perm[i * n_second + j])] = (first[i], second[j])
        return cls("two-hop", answers, first, second, tuple(class_to_signals))

    def oracle_answer(self, attributes: Sequence[Iterable[str]]) -> str:
        """Read the planted attributes off the frames and apply the rule."""
        present = set()
        for frame in attributes:
            present.update(frame)
        if self.kind == "one-hop":
            found = sorted(present & set(self.signal_attrs))
            if len(found) != 1:
                raise DataError(f"one-hop oracle: expected exactly one signal, found {found}")
            key = (found[0],)
        else:
            first = sorted(present & set(self.signal_attrs))
            second = sorted(present & set(self.second_attrs))
            if len(first) != 1 or len(second) != 1:
                raise DataError(
                    f"two-hop oracle: expected one signal per family, found {first} and {second}")
            key = (first[0], second[0])
        return self.answers[self.class_to_signals.index(key)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "answers": list(self.answers),
            "signal_attrs": list(self.signal_attrs),
            "second_attrs": list(self.second_attrs),
            "class_to_signals": [list(s) for s in self.class_to_signals],
        }

    @classmethod
    def from_kind(cls, kind: str, seed: int = 0, n_classes: int = 8) -> "PlantedRule":
        if kind == "one-hop":
            return cls.one_hop(n_classes=n_classes, seed=seed)
        if kind == "two-hop":
            side = max(2, int(round(n_classes ** 0.5)))
            return cls.two_hop(n_first=side, n_second=max(2, n_classes // side), seed=seed)
        raise ConfigError(f"unknown rule kind {kind!r} (expected one-hop or two-hop)")


def _balanced_deck(n: int, n_options: int, rng: np.random.Generator) -> np.ndarray:
    deck = np.resize(np.arange(n_options), n)
    rng.shuffle(deck)
    return deck


def _split_counts(count: int | Sequence[int]) -> tuple[int, int, int]:
    if not isinstance(count, int):
        train, valid, test = (int(c) for c in count)
    else:
        if count < 10:
            raise ConfigError(f"need at least 10 instances, got {count}")
        train = int(round(count * SPLIT_FRACTIONS[0]))
        valid = max(1, int(round(count * SPLIT_FRACTIONS[1])))
        test = max(1, count - train - valid)
        train = count - valid - test
    if train < 1 or valid < 0 or test < 0:
        raise ConfigError(f"bad split sizes ({train}, {valid}, {test})")
    return train, valid, test


def synth_generate(rule: PlantedRule, count: int | Sequence[int],
                   n_frames: int = 8, frame_dim: int = 32, seed: int = 0,
                   feature_noise: float = 0.5, n_candidates: int = 4,
                   max_vocab: int = 6500) -> DatasetSplit:
    """Generate a planted-rule dataset, deterministic under ``seed``.

    ``count`` is either a total (split with proportions mirroring a large
    train split and small valid/test splits) or an explicit (train, valid,
    test) triple. Answer classes and question types are dealt from balanced
    decks, so class frequencies are uniform up to rounding and the majority
    baseline sits at ~1/n_classes.
    """
    if n_frames < 2 and rule.kind == "two-hop":
        raise ConfigError("two-hop rules need at least 2 frames")
    sizes = _split_counts(count)
    rng = np.random.default_rng(seed)
    parts: list[list[VideoInstance]] = []
    next_id = 0
    for size in sizes:
        instances = []
        classes = _balanced_deck(size, rule.n_classes, rng)
        qtypes = _balanced_deck(size, len(CUES), rng)
        for i in range(size):
            instances.append(_make_instance(
                rule, f"vid{next_id:05d}", int(classes[i]), int(qtypes[i]),
                n_frames, frame_dim, feature_noise, n_candidates, rng))
            next_id += 1
        parts.append(instances)

    everything = [inst for part in parts for inst in part]
    vocab = build_vocab(token_streams(everything), max_vocab)
    answer_classes = sorted(rule.answers)
    split = DatasetSplit(parts[0], parts[1], parts[2], vocab, answer_classes,
                         n_frames, frame_dim)
    resolve_instances(everything, vocab, split.class_index())
    return split


def _make_instance(rule, video_id, class_idx, qtype_idx, n_frames, frame_dim,
                   feature_noise, n_candidates, rng) -> VideoInstance:
    signals = rule.class_to_signals[class_idx]
    answer_token = rule.answers[class_idx]
    cue, qtype = CUES[qtype_idx]

    frames: list[list[str]] = []
    for _ in range(n_frames):
        k = int(rng.integers(0, 3))
        frames.append(sorted(rng.choice(DISTRACTORS, size=k, replace=False).tolist()))
    spots = rng.choice(n_frames, size=len(signals), replace=False)
    for token, frame_idx in zip(signals, spots):
        frames[int(frame_idx)].append(token)
    attributes = [tuple(sorted(frame)) for frame in frames]

    length = int(rng.integers(3, 7))
    words = rng.choice(FILLERS, size=length - 1, replace=True).tolist()
    words.insert(int(rng.integers(0, length)), cue)

    others = [a for a in rule.answers if a != answer_token]
    picked = rng.choice(len(others), size=min(n_candidates - 1, len(others)),
                        replace=False)
    candidates = [answer_token] + [others[int(i)] for i in picked]
    rng.shuffle(candidates)

    features = rng.normal(0.0, feature_noise, size=(n_frames, frame_dim))
    features = features.astype("<f4").astype(np.float64)  # float32-representable for exact IO

    qa = QAPair(question=words, answer=[answer_token], answer_class=answer_token,
                candidates=candidates, qtype=qtype)
    return VideoInstance(video_id, features, attributes, [qa])


def majority_class_rate(instances: Sequence[VideoInstance]) -> float:
    """Frequency of the most common answer class over all QA pairs."""
    counts: dict[str, int] = {}
    total = 0
    for inst in instances:
        for qa in inst.qa_pairs:
            counts[qa.answer_class] = counts.get(qa.answer_class, 0) + 1
            total += 1
    if total == 0:
        raise DataError("no QA pairs")
    return max(counts.values()) / total
