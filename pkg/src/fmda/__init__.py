"""Few-shot metric domain adaptation with synthetic domain-shift benchmarks.

Two-phase training: supervised pre-training on a source domain, then
few-shot adaptation that ties target features to source features through a
distance loss (plain Euclidean or a double-margin triplet). Ships the
gradient-reversal adversarial baselines, a parametric benchmark generator,
and a multi-trial evaluation harness.
"""

from .config import ADAPTED_METHODS, METHODS, N_INDEPENDENT_METHODS, RunConfig
from .datagen import GeneratedPair, ShiftSpec, export_csv, generate, load_csv, standard_spec
from .datasets import LabeledDataset
from .errors import ConfigurationError, FmdaError, LeakageError, UsageError
from .losses import LossValue, combined_loss, cross_entropy, l2_distance_loss, triplet_plus_loss
from .metrics import EvalReport, degradation_gap, evaluate_model, macro_f1
from .model import (
    AdamState,
    Checkpoint,
    ModelParams,
    adam_step,
    backward,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .numeric import RngStream, euclidean_distance, matmul, softmax
from .sampling import AdaptBatch, FewShotSplit, build_adapt_batch, draw_fewshot, shuffle_epoch
from .suite import SuiteReport, export_features, run_suite
from .train import adapt, pretrain

__version__ = "0.1.0"

__all__ = [
    "ADAPTED_METHODS",
    "AdamState",
    "AdaptBatch",
    "Checkpoint",
    "ConfigurationError",
    "EvalReport",
    "FewShotSplit",
    "FmdaError",
    "GeneratedPair",
    "LabeledDataset",
    "LeakageError",
    "LossValue",
    "METHODS",
    "ModelParams",
    "N_INDEPENDENT_METHODS",
    "RngStream",
    "RunConfig",
    "ShiftSpec",
    "SuiteReport",
    "UsageError",
    "adam_step",
    "adapt",
    "backward",
    "build_adapt_batch",
    "combined_loss",
    "cross_entropy",
    "degradation_gap",
    "draw_fewshot",
    "euclidean_distance",
    "evaluate_model",
    "export_csv",
    "export_features",
    "forward",
    "generate",
    "init_model",
    "l2_distance_loss",
    "load_checkpoint",
    "load_csv",
    "macro_f1",
    "matmul",
    "pretrain",
    "run_suite",
    "save_checkpoint",
    "shuffle_epoch",
    "softmax",
    "standard_spec",
    "triplet_plus_loss",
]
