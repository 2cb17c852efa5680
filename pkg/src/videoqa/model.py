"""The attention network: encoders, attribute fusion, reasoning, answer heads.

Frame features and question tokens are encoded by bidirectional LSTMs; each
frame state is fused with the mean embedding of its detected attributes by an
elementwise product; scalar per-frame attention scores (tanh of an affine
form in the query and the fused frame) are softmax-normalized and the model
reasons in steps, adding the attended video vector back into the query. The
final joint vector feeds a softmax classifier (multiple choice) or seeds an
LSTM decoder (open-ended).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError, DimensionError
from .lstm import GATES, LSTMCellParams, bilstm_rows, bilstm_states, lstm_step
from .vocab import BOS_ID, EOS_ID


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and switches; the question and fused video vectors both
    live in R^(2*hidden_dim), which the reasoning update requires."""

    vocab_size: int
    n_classes: int
    frame_dim: int = 32
    embed_dim: int = 16
    hidden_dim: int = 16
    n_frames: int = 8
    reasoning_steps: int = 1
    use_attributes: bool = True
    max_answer_len: int = 8
    mean_pool_baseline: bool = False

    def __post_init__(self):
        for name in ("vocab_size", "n_classes", "frame_dim", "embed_dim",
                     "hidden_dim", "n_frames", "max_answer_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.reasoning_steps < 0:
            raise ConfigError(f"reasoning_steps must be >= 0, got {self.reasoning_steps}")
        if self.vocab_size < 5:
            raise ConfigError("vocab_size must cover the 4 reserved tokens plus content")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")

    @property
    def joint_dim(self) -> int:
        return 2 * self.hidden_dim

    def variant(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


def _cell_layout(prefix: str, input_dim: int, hidden_dim: int):
    entries = []
    for gate in GATES:
        entries.append((f"{prefix}.w_{gate}", (hidden_dim, input_dim + hidden_dim)))
        entries.append((f"{prefix}.b_{gate}", (hidden_dim,)))
    return entries


def param_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Fixed (name, shape) order for initialization, flattening, checkpoints."""
    two_h = config.joint_dim
    entries = []
    if not config.mean_pool_baseline:
        entries += _cell_layout("video_fwd", config.frame_dim, config.hidden_dim)
        entries += _cell_layout("video_bwd", config.frame_dim, config.hidden_dim)
    entries += _cell_layout("question_fwd", config.embed_dim, config.hidden_dim)
    entries += _cell_layout("question_bwd", config.embed_dim, config.hidden_dim)
    entries.append(("word_emb", (config.vocab_size, config.embed_dim)))
    if config.mean_pool_baseline:
        entries.append(("pool_w", (two_h, config.frame_dim)))
        entries.append(("pool_b", (two_h,)))
    else:
        # attribute table stays in the layout when fusion is switched off so
        # that ablation variants share every other tensor bit-for-bit
        entries.append(("attr_emb", (config.vocab_size, two_h)))
        entries.append(("attn_wq", (1, two_h)))
        entries.append(("attn_wv", (1, two_h)))
        entries.append(("attn_bt", (1,)))
    entries.append(("cls_w", (config.n_classes, two_h)))
    entries.append(("cls_b", (config.n_classes,)))
    entries += _cell_layout("decoder", config.embed_dim, two_h)
    entries.append(("out_w", (config.vocab_size, two_h)))
    entries.append(("out_b", (config.vocab_size,)))
    return entries


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_layout(config))


class ModelParams:
    """Named parameter tensors in the fixed layout order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        expected = param_layout(config)
        if [n for n, _ in expected] != list(tensors):
            raise ConfigError("parameter names do not match the layout for this config")
        for name, shape in expected:
            if tensors[name].shape != shape:
                raise DimensionError(f"parameter {name}: expected shape {shape}, got {tensors[name].shape}")
        self._tensors = dict(tensors)
        self._cells = {}
        if not config.mean_pool_baseline:
            self._cells["video_fwd"] = self._cell("video_fwd", config.frame_dim, config.hidden_dim)
            self._cells["video_bwd"] = self._cell("video_bwd", config.frame_dim, config.hidden_dim)
        self._cells["question_fwd"] = self._cell("question_fwd", config.embed_dim, config.hidden_dim)
        self._cells["question_bwd"] = self._cell("question_bwd", config.embed_dim, config.hidden_dim)
        self._cells["decoder"] = self._cell("decoder", config.embed_dim, config.joint_dim)

    def _cell(self, prefix: str, input_dim: int, hidden_dim: int) -> LSTMCellParams:
        parts = {f"w_{g}": self._tensors[f"{prefix}.w_{g}"] for g in GATES}
        parts |= {f"b_{g}": self._tensors[f"{prefix}.b_{g}"] for g in GATES}
        return LSTMCellParams(input_dim, hidden_dim, parts)

    def cell(self, name: str) -> LSTMCellParams:
        return self._cells[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def named(self):
        return self._tensors.items()

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    @classmethod
    def init_random(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        """Matrices are zero-mean Gaussian (std 0.1); biases are zero except
        the forget-gate bias, which starts at +1 for stable memory carry."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in param_layout(config):
            if len(shape) == 2:
                values = rng.normal(0.0, 0.1, size=shape)
            elif name.endswith(".b_f"):
                values = np.ones(shape)
            else:
                values = np.zeros(shape)
            tensors[name] = Tensor(values, requires_grad=True)
        return cls(config, tensors)

    @classmethod
    def from_vector(cls, config: ModelConfig, flat: Tensor) -> "ModelParams":
        """Slice a single flat tensor into the full parameter set; gradients
        flow back into the flat tensor, which is what the whole-model
        gradient check differentiates."""
        expected = parameter_count(config)
        if flat.shape != (expected,):
            raise DimensionError(f"from_vector: expected shape ({expected},), got {flat.shape}")
        tensors = {}
        offset = 0
        for name, shape in param_layout(config):
            n = int(np.prod(shape))
            tensors[name] = ad.slice_reshape(flat, offset, shape)
            offset += n
        return cls(config, tensors)

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.values.reshape(-1) for t in self._tensors.values()])

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self._tensors.items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            t.values[...] = snap[name]


@dataclass
class EncodedVideo:
    """Per-frame bidirectional states and their attribute-fused versions."""

    h_rows: list[Tensor]
    g_rows: list[Tensor]
    g_matrix: Tensor
    attributes_used: bool


@dataclass
class ReasoningStep:
    """One attention pass: scores, weights, attended vector, updated state."""

    scores: np.ndarray
    weights: np.ndarray
    attended: np.ndarray
    state: np.ndarray


AttentionTrace = list[ReasoningStep]


def trace_to_dict(trace: AttentionTrace) -> dict[str, list[float]]:
    """Export form: reasoning step -> attention weights over frames."""
    return {str(r + 1): step.weights.tolist() for r, step in enumerate(trace)}


class VideoQAModel:
    """Parameters plus the forward passes for both answer heads."""

    def __init__(self, config: ModelConfig, params: ModelParams):
        self.config = config
        self.params = params
        self._ones_joint = Tensor(np.ones(config.joint_dim))
        self._zero_one = Tensor(np.zeros(1))
        self._zero_joint = Tensor(np.zeros(config.joint_dim))

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "VideoQAModel":
        return cls(config, ModelParams.init_random(config, seed))

    # -- encoders ----------------------------------------------------------

    def attribute_rep(self, attr_ids: Sequence[int]) -> Tensor:
        """Mean attribute embedding; the empty set maps to the all-ones
        vector so that fusion leaves the frame state untouched."""
        if len(attr_ids) == 0:
            return self._ones_joint
        rows = [ad.embed_lookup(self.params["attr_emb"], i) for i in attr_ids]
        return ad.mean_rows(ad.stack_rows(rows))

    def fuse(self, h_row: Tensor, f_attr: Tensor) -> Tensor:
        return ad.hadamard(h_row, f_attr)

    def encode_video(self, feature_rows: list[Tensor],
                     attribute_ids: Sequence[Sequence[int]]) -> EncodedVideo:
        cfg = self.config
        if len(feature_rows) != cfg.n_frames or len(attribute_ids) != cfg.n_frames:
            raise DimensionError(
                f"encode_video: expected {cfg.n_frames} frames, got "
                f"{len(feature_rows)} feature rows / {len(attribute_ids)} attribute sets")
        f_states, b_states = bilstm_states(self.params.cell("video_fwd"),
                                           self.params.cell("video_bwd"), feature_rows)
        h_rows = bilstm_rows(f_states, b_states)
        if cfg.use_attributes:
            g_rows = [self.fuse(h, self.attribute_rep(ids))
                      for h, ids in zip(h_rows, attribute_ids)]
        else:
            g_rows = h_rows
        return EncodedVideo(h_rows, g_rows, ad.stack_rows(g_rows), cfg.use_attributes)

    def encode_question(self, token_ids: Sequence[int]) -> Tensor:
        """Final forward state and final backward state, concatenated; each
        half has consumed the whole question."""
        if len(token_ids) == 0:
            raise DataError("encode_question: empty question")
        inputs = [ad.embed_lookup(self.params["word_emb"], i) for i in token_ids]
        f_states, b_states = bilstm_states(self.params.cell("question_fwd"),
                                           self.params.cell("question_bwd"), inputs)
        return ad.concat(f_states[-1], b_states[-1])

    # -- attention and reasoning -------------------------------------------

    def attention_scores(self, query: Tensor, g_rows: list[Tensor]) -> tuple[Tensor, Tensor]:
        """Scalar score per frame: tanh(Wq.query + Wv.g_i + b), then softmax."""
        p = self.params
        q_term = ad.affine(p["attn_wq"], query, p["attn_bt"])
        per_frame = [ad.tanh_map(ad.add(q_term, ad.affine(p["attn_wv"], g, self._zero_one)))
                     for g in g_rows]
        scores = per_frame[0]
        for s in per_frame[1:]:
            scores = ad.concat(scores, s)
        return scores, ad.softmax_vec(scores)

    def attend(self, weights: Tensor, g_matrix: Tensor) -> Tensor:
        return ad.vecmat(weights, g_matrix)

    def reason(self, h_q: Tensor, video: EncodedVideo,
               steps: int | None = None) -> tuple[Tensor, AttentionTrace]:
        """Iteratively re-attend with the current state as query and add the
        attended video vector; zero steps returns the question state as is."""
        if steps is None:
            steps = self.config.reasoning_steps
        z = h_q
        trace: AttentionTrace = []
        for _ in range(steps):
            scores, weights = self.attention_scores(z, video.g_rows)
            attended = self.attend(weights, video.g_matrix)
            z = ad.add(z, attended)
            trace.append(ReasoningStep(scores.values.copy(), weights.values.copy(),
                                       attended.values.copy(), z.values.copy()))
        return z, trace

    # -- joint representation ----------------------------------------------

    def joint_representation(self, feature_rows: list[Tensor],
                             attribute_ids: Sequence[Sequence[int]],
                             question_ids: Sequence[int]) -> tuple[Tensor, AttentionTrace]:
        h_q = self.encode_question(question_ids)
        if self.config.mean_pool_baseline:
            pooled = ad.mean_rows(ad.stack_rows(feature_rows))
            projected = ad.affine(self.params["pool_w"], pooled, self.params["pool_b"])
            return ad.hadamard(h_q, projected), []
        video = self.encode_video(feature_rows, attribute_ids)
        return self.reason(h_q, video)

    # -- heads ---------------------------------------------------------------

    def classify_logits(self, z: Tensor) -> Tensor:
        return ad.affine(self.params["cls_w"], z, self.params["cls_b"])

    def classify(self, z: Tensor) -> Tensor:
        return ad.softmax_vec(self.classify_logits(z))

    def forward_mc(self, feature_rows, attribute_ids, question_ids) -> tuple[Tensor, AttentionTrace]:
        z, trace = self.joint_representation(feature_rows, attribute_ids, question_ids)
        return self.classify(z), trace

    def mc_logits(self, feature_rows, attribute_ids, question_ids) -> tuple[Tensor, AttentionTrace]:
        z, trace = self.joint_representation(feature_rows, attribute_ids, question_ids)
        return self.classify_logits(z), trace

    def forward_oe(self, feature_rows, attribute_ids, question_ids,
                   target_ids: Sequence[int]) -> tuple[list[Tensor], AttentionTrace]:
        """Teacher-forced decoder logits, one per target position."""
        z, trace = self.joint_representation(feature_rows, attribute_ids, question_ids)
        logits = self.decode_logits(z, target_ids)
        return logits, trace

    def decode_logits(self, z: Tensor, target_ids: Sequence[int]) -> list[Tensor]:
        p = self.params
        cell = p.cell("decoder")
        h, c = z, self._zero_joint
        prev = BOS_ID
        logits = []
        for target in target_ids:
            x = ad.embed_lookup(p["word_emb"], prev)
            h, c = lstm_step(cell, x, h, c)
            logits.append(ad.affine(p["out_w"], h, p["out_b"]))
            prev = int(target)
        return logits

    def decode_answer(self, z: Tensor) -> list[int]:
        """Greedy decoding from the joint state; the hidden state starts at z,
        the cell at zero, and the first input is the <bos> embedding. Stops at
        <eos> or after max_answer_len tokens; <bos>/<eos> are not emitted."""
        p = self.params
        cell = p.cell("decoder")
        h, c = z, self._zero_joint
        token = BOS_ID
        out: list[int] = []
        for _ in range(self.config.max_answer_len):
            x = ad.embed_lookup(p["word_emb"], token)
            h, c = lstm_step(cell, x, h, c)
            logits = ad.affine(p["out_w"], h, p["out_b"])
            token = int(np.argmax(logits.values))
            if token == EOS_ID:
                break
            out.append(token)
        return out

    def answer_open_ended(self, feature_rows, attribute_ids,
                          question_ids) -> tuple[list[int], AttentionTrace]:
        z, trace = self.joint_representation(feature_rows, attribute_ids, question_ids)
        return self.decode_answer(z), trace
