"""Run configuration and the stream-id registry for deterministic training."""

from __future__ import annotations

from dataclasses import dataclass, fields, asdict

from .errors import ConfigurationError
from .numeric import RngStream

METHODS = (
    "without-target",
    "dann",
    "finetune",
    "dann-tune",
    "fmda-l2",
    "fmda-triplet",
)

# Methods whose adaptation phase consumes the few-shot split.
ADAPTED_METHODS = ("finetune", "dann-tune", "fmda-l2", "fmda-triplet")
# Methods that ignore n: evaluated / trained on the full target pool.
N_INDEPENDENT_METHODS = ("without-target", "dann")

# Stream-id components. A consumer's stream id is (trial << 8) | component,
# so trials never collide and every consumer draws independently.
STREAM_INIT = 0x01
STREAM_SHUFFLE = 0x02
STREAM_FEWSHOT = 0x03
STREAM_BATCH = 0x04
STREAM_PAIRS = 0x05
STREAM_DISC_INIT = 0x06
STREAM_DANN_BATCH = 0x07

# Data-generation components live in their own range (keyed by the data seed).
STREAM_GEN_MEANS = 0x20
STREAM_GEN_GEOMETRY = 0x21
STREAM_GEN_SOURCE = 0x22
STREAM_GEN_TARGET = 0x23
STREAM_GEN_EXTRA = 0x24


def trial_stream(seed: int, trial: int, component: int) -> RngStream:
    """Independent stream for one (trial, component) pair under a base seed."""
    if trial < 0:
        raise ConfigurationError("trial index must be >= 0")
    return RngStream(seed, (int(trial) << 8) | int(component))


@dataclass(frozen=True)
class RunConfig:
    """All training hyperparameters for both phases.

    Defaults follow the standard recipe: Adam at lr 0.001, adaptation
    batches of 2 x n_classes, distance weight lam = 1, 100 pre-training
    epochs and 1,000 adaptation steps.
    """

    n_classes: int
    hidden_dims: tuple = (64, 64)
    feature_dim: int = 32
    method: str = "fmda-triplet"
    lam: float = 1.0            # weight of the distance loss
    alpha: float = 1.0          # triplet inter-pair margin
    beta: float = 0.3           # triplet absolute positive-distance margin
    n: int = 10                 # few-shot target samples per class
    lr: float = 0.001
    pretrain_iters: int = 100   # epochs over the source set
    adapt_iters: int = 1000     # optimizer steps
    batch_pretrain: int = 128
    eval_every: int = 10
    seed: int = 0
    trials: int = 5
    lambda_d: float = 1.0       # gradient-reversal coefficient
    detach_source: bool = False  # treat source features as constants in the distance loss
    fixed_pairs: bool = False    # freeze positive/negative choice per anchor
    normalize_features: bool = False  # unit-normalize features before distances

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.method not in METHODS:
            raise ConfigurationError(
                f"unknown method {self.method!r}; expected one of {METHODS}"
            )
        checks = [
            (self.n_classes >= 2, "n_classes must be >= 2"),
            (all(h >= 1 for h in self.hidden_dims), "hidden dims must be >= 1"),
            (self.feature_dim >= 1, "feature_dim must be >= 1"),
            (self.lam >= 0, "lam must be >= 0"),
            (self.alpha >= 0, "alpha must be >= 0"),
            (self.beta >= 0, "beta must be >= 0"),
            (self.n >= 1, "n must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.pretrain_iters >= 0, "pretrain_iters must be >= 0"),
            (self.adapt_iters >= 0, "adapt_iters must be >= 0"),
            (self.batch_pretrain >= 1, "batch_pretrain must be >= 1"),
            (self.eval_every >= 1, "eval_every must be >= 1"),
            (self.trials >= 1, "trials must be >= 1"),
            (self.lambda_d >= 0, "lambda_d must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigurationError(msg)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)
