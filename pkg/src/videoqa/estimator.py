"""Estimator-style wrapper: constructor takes hyperparameters, fit trains.

Follows the scikit-learn parameter conventions (constructor arguments stored
verbatim, ``get_params``/``set_params``, fitted attributes with trailing
underscores) so the model slots into pipelines and search utilities without
depending on scikit-learn itself.
"""

from __future__ import annotations

import numpy as np

from .dataset import DatasetSplit, VideoInstance, check_instances, resolve_instances, token_streams
from .errors import ConfigError, ContractError
from .metrics import AccuracyReport, evaluate_accuracy, restricted_argmax
from .model import ModelConfig, VideoQAModel
from .training import TrainConfig, train
from .vocab import build_vocab


class VideoQAEstimator:
    """Trainable video question answerer with a fit/predict surface.

    ``task`` selects the answer head: "mc" predicts one of the candidate
    answer classes, "oe" generates an answer token sequence.
    """

    _PARAM_NAMES = (
        "task", "hidden_dim", "embed_dim", "reasoning_steps", "use_attributes",
        "mean_pool_baseline", "max_answer_len", "max_vocab", "learning_rate",
        "adagrad_eps", "l2", "epochs", "patience", "k", "seed",
    )

    def __init__(self, task: str = "mc", hidden_dim: int = 16, embed_dim: int = 16,
                 reasoning_steps: int = 1, use_attributes: bool = True,
                 mean_pool_baseline: bool = False, max_answer_len: int = 8,
                 max_vocab: int = 6500, learning_rate: float = 0.01,
                 adagrad_eps: float = 1e-8, l2: float = 1e-4, epochs: int = 30,
                 patience: int = 5, k: int = 1, seed: int = 0):
        self.task = task
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.reasoning_steps = reasoning_steps
        self.use_attributes = use_attributes
        self.mean_pool_baseline = mean_pool_baseline
        self.max_answer_len = max_answer_len
        self.max_vocab = max_vocab
        self.learning_rate = learning_rate
        self.adagrad_eps = adagrad_eps
        self.l2 = l2
        self.epochs = epochs
        self.patience = patience
        self.k = k
        self.seed = seed

    # -- scikit-learn parameter protocol -------------------------------------

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params) -> "VideoQAEstimator":
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(
                    f"invalid parameter {name!r} for estimator {type(self).__name__}")
            setattr(self, name, value)
        return self

    # -- fitting ---------------------------------------------------------------

    def fit(self, instances: list[VideoInstance],
            valid: list[VideoInstance] | None = None) -> "VideoQAEstimator":
        """Build the vocabulary and class list from the given instances,
        then train; resolved token ids are written into the instances."""
        if self.task not in ("mc", "oe"):
            raise ConfigError(f"unknown task {self.task!r} (expected mc or oe)")
        valid = valid or []
        n_frames, frame_dim = check_instances(list(instances) + list(valid))
        everything = list(instances) + list(valid)
        vocab = build_vocab(token_streams(everything), self.max_vocab)
        labels = sorted({label for inst in everything for qa in inst.qa_pairs
                         for label in (qa.answer_class, *qa.candidates)})
        split = DatasetSplit(list(instances), list(valid), [], vocab, labels,
                             n_frames, frame_dim)
        resolve_instances(everything, vocab, split.class_index())

        config = ModelConfig(
            vocab_size=len(vocab), n_classes=len(labels), frame_dim=frame_dim,
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim, n_frames=n_frames,
            reasoning_steps=self.reasoning_steps, use_attributes=self.use_attributes,
            max_answer_len=self.max_answer_len, mean_pool_baseline=self.mean_pool_baseline)
        self.model_ = VideoQAModel.initialize(config, seed=self.seed)
        self.config_ = config
        self.vocab_ = vocab
        self.classes_ = labels
        self.report_ = train(self.model_, split,
                             TrainConfig(learning_rate=self.learning_rate,
                                         adagrad_eps=self.adagrad_eps, l2=self.l2,
                                         epochs=self.epochs, patience=self.patience,
                                         seed=self.seed),
                             task=self.task)
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise ContractError("estimator is not fitted; call fit first")

    def _resolve(self, instances: list[VideoInstance]) -> None:
        check_instances(instances, self.config_.n_frames, self.config_.frame_dim)
        resolve_instances(instances, self.vocab_,
                          {c: i for i, c in enumerate(self.classes_)})

    # -- prediction ------------------------------------------------------------

    def predict(self, instances: list[VideoInstance]) -> list[str]:
        """One answer per QA pair: the chosen class token for mc, the decoded
        answer phrase for oe."""
        self._require_fitted()
        self._resolve(instances)
        out = []
        for inst in instances:
            rows = inst.feature_rows()
            for qa in inst.qa_pairs:
                if self.task == "mc":
                    p, _ = self.model_.forward_mc(rows, inst.attribute_ids, qa.question_ids)
                    out.append(self.classes_[restricted_argmax(p.values, qa.candidate_idxs)])
                else:
                    tokens, _ = self.model_.answer_open_ended(rows, inst.attribute_ids,
                                                              qa.question_ids)
                    out.append(" ".join(self.vocab_.decode(tokens)))
        return out

    def predict_proba(self, instances: list[VideoInstance]) -> np.ndarray:
        """Class distributions for the mc head, one row per QA pair."""
        self._require_fitted()
        if self.task != "mc":
            raise ContractError("predict_proba is only defined for the mc task")
        self._resolve(instances)
        rows_out = []
        for inst in instances:
            rows = inst.feature_rows()
            for qa in inst.qa_pairs:
                p, _ = self.model_.forward_mc(rows, inst.attribute_ids, qa.question_ids)
                rows_out.append(p.values.copy())
        return np.stack(rows_out)

    def score(self, instances: list[VideoInstance]) -> float:
        """First-K accuracy (K from the constructor) over the given instances."""
        self._require_fitted()
        self._resolve(instances)
        report: AccuracyReport = evaluate_accuracy(self.model_, instances, self.task,
                                                   k=self.k if self.task == "oe" else 1)
        return report.overall
