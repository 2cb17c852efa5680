"""Video question answering with attribute-fused temporal attention.

Bidirectional LSTM encoders for frames and question text, per-frame fusion
of detected attribute embeddings, multi-step attention reasoning, and both a
multiple-choice classifier and an open-ended LSTM decoder, all built on a
small scratch autodiff kernel so every gradient is checkable.
"""

from .ablation import AblationReport, run_ablation
from .autodiff import GradCheckReport, Tape, Tensor, grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import (
    DatasetSplit,
    QAPair,
    VideoInstance,
    check_instances,
    load_dataset,
    write_dataset,
)
from .estimator import VideoQAEstimator
from .metrics import AccuracyReport, evaluate_accuracy, exact_match_loss, first_k_score
from .model import ModelConfig, ModelParams, VideoQAModel
from .synth import PlantedRule, synth_generate
from .training import AdaGrad, TrainConfig, TrainReport, full_model_grad_check, train
from .vocab import Vocabulary, build_vocab

__version__ = "0.1.0"

__all__ = [
    "AblationReport",
    "AccuracyReport",
    "AdaGrad",
    "DatasetSplit",
    "GradCheckReport",
    "ModelConfig",
    "ModelParams",
    "PlantedRule",
    "QAPair",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "VideoInstance",
    "VideoQAEstimator",
    "VideoQAModel",
    "Vocabulary",
    "build_vocab",
    "check_instances",
    "evaluate_accuracy",
    "exact_match_loss",
    "first_k_score",
    "full_model_grad_check",
    "grad_check",
    "load_checkpoint",
    "load_dataset",
    "run_ablation",
    "save_checkpoint",
    "synth_generate",
    "train",
    "write_dataset",
]
