"""MLP feature extractor plus linear-softmax head with hand-written backprop.

The network is small enough that every gradient is derived by hand and
checked against finite differences; no autodiff anywhere.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError, FmdaError, UsageError
from .numeric import RngStream, as_matrix, softmax_rows

PHASES = ("pretrain", "adapt")


@dataclass
class ModelParams:
    """Weights and biases: ReLU hidden stack (the feature extractor) + linear head."""

    hidden_w: list       # each (d_in, d_out) float64
    hidden_b: list       # each (d_out,) float64
    head_w: np.ndarray   # (feature_dim, n_classes)
    head_b: np.ndarray   # (n_classes,)
    version: int = 0     # bumped on every optimizer step; guards stale caches

    @property
    def input_dim(self) -> int:
        return self.hidden_w[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.hidden_w[-1].shape[1]

    @property
    def n_classes(self) -> int:
        return self.head_w.shape[1]

    @property
    def hidden_dims(self) -> tuple:
        return tuple(w.shape[1] for w in self.hidden_w[:-1])

    def arrays(self) -> dict:
        """Named parameter arrays in a fixed order (views, not copies)."""
        out = {}
        for i, (w, b) in enumerate(zip(self.hidden_w, self.hidden_b)):
            out[f"h{i}.w"] = w
            out[f"h{i}.b"] = b
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            hidden_w=[w.copy() for w in self.hidden_w],
            hidden_b=[b.copy() for b in self.hidden_b],
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )


def _he_uniform(rng: RngStream, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / d_in)
    return rng.uniform(-limit, limit, size=(d_in, d_out))


def init_model(
    input_dim: int,
    hidden_dims,
    feature_dim: int,
    n_classes: int,
    rng: RngStream,
) -> ModelParams:
    """He-uniform weights for the ReLU stack and head, zero biases."""
    dims = [int(input_dim), *[int(h) for h in hidden_dims], int(feature_dim)]
    hidden_w = [_he_uniform(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]
    hidden_b = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return ModelParams(
        hidden_w=hidden_w,
        hidden_b=hidden_b,
        head_w=_he_uniform(rng, feature_dim, n_classes),
        head_b=np.zeros(n_classes),
    )


@dataclass
class ForwardCache:
    """Everything backward() needs from one forward pass."""

    x: np.ndarray
    pre: list        # pre-activations per hidden layer
    act: list        # post-ReLU activations per hidden layer
    features: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    owner: ModelParams = field(repr=False)
    version: int = 0


def forward(params: ModelParams, x) -> ForwardCache:
    """Run the full network on a batch; rows of probs sum to 1."""
    x = as_matrix(x)
    if x.shape[1] != params.input_dim:
        raise ConfigurationError(
            f"input dim {x.shape[1]} does not match model input {params.input_dim}"
        )
    pre, act = [], []
    a = x
    for w, b in zip(params.hidden_w, params.hidden_b):
        z = a @ w + b
        a = np.maximum(z, 0.0)
        pre.append(z)
        act.append(a)
    features = a
    logits = features @ params.head_w + params.head_b
    probs = softmax_rows(logits)
    return ForwardCache(
        x=x, pre=pre, act=act, features=features, logits=logits, probs=probs,
        owner=params, version=params.version,
    )


def backward(params: ModelParams, cache: ForwardCache, grad_features=None, grad_logits=None):
    """Exact parameter gradients for the scalar loss whose upstream
    gradients (w.r.t. features and/or logits) are supplied.

    Returns (grads dict keyed like params.arrays(), grad w.r.t. the input
    batch). Either upstream gradient may be omitted.
    """
    if cache.owner is not params or cache.version != params.version:
        raise UsageError("stale forward cache: parameters changed since forward()")
    grads = {}
    if grad_logits is not None:
        gl = as_matrix(grad_logits)
        grads["head.w"] = cache.features.T @ gl
        grads["head.b"] = gl.sum(axis=0)
        df = gl @ params.head_w.T
        if grad_features is not None:
            df = df + as_matrix(grad_features)
    else:
        grads["head.w"] = np.zeros_like(params.head_w)
        grads["head.b"] = np.zeros_like(params.head_b)
        if grad_features is not None:
            df = as_matrix(grad_features)
        else:
            df = np.zeros_like(cache.features)
    for layer in reversed(range(len(params.hidden_w))):
        dz = df * (cache.pre[layer] > 0.0)
        a_prev = cache.act[layer - 1] if layer > 0 else cache.x
        grads[f"h{layer}.w"] = a_prev.T @ dz
        grads[f"h{layer}.b"] = dz.sum(axis=0)
        df = dz @ params.hidden_w[layer].T
    return grads, df


def accumulate(grads: dict, other: dict, scale: float = 1.0) -> dict:
    """Add scale * other into grads in place."""
    for name, g in other.items():
        if scale == 1.0:
            grads[name] += g
        else:
            grads[name] += scale * g
    return grads


@dataclass
class AdamState:
    """First/second moment estimates mirroring the parameter arrays."""

    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        arrays = params.arrays()
        return cls(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
        )


def adam_step(params: ModelParams, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place. Aborts on non-finite gradients."""
    if lr <= 0:
        raise ConfigurationError("lr must be > 0")
    arrays = params.arrays()
    for name, p in arrays.items():
        if name not in grads:
            raise UsageError(f"missing gradient for {name}")
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigurationError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise FmdaError(f"non-finite gradient for {name}; aborting optimizer step")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, p in arrays.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(p)):
            raise FmdaError(f"non-finite parameter {name} after optimizer step")
    params.version += 1
    return params, state


@dataclass
class Checkpoint:
    """Model snapshot with the config that produced it."""

    params: ModelParams
    config: RunConfig
    iteration: int
    phase: str

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigurationError(f"phase must be one of {PHASES}")


def _encode_array(a: np.ndarray) -> dict:
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    return raw.astype(np.float64).reshape(d["shape"]).copy()


def checkpoint_to_dict(ck: Checkpoint) -> dict:
    params = ck.params
    return {
        "format": "fmda-checkpoint",
        "format_version": 1,
        "phase": ck.phase,
        "iteration": int(ck.iteration),
        "config": ck.config.to_dict(),
        "arch": {
            "input_dim": params.input_dim,
            "hidden_dims": list(params.hidden_dims),
            "feature_dim": params.feature_dim,
            "n_classes": params.n_classes,
        },
        "params": {k: _encode_array(a) for k, a in params.arrays().items()},
    }


def checkpoint_from_dict(d: dict) -> Checkpoint:
    if d.get("format") != "fmda-checkpoint":
        raise ConfigurationError("not a checkpoint container")
    if d.get("format_version") != 1:
        raise ConfigurationError(f"unsupported checkpoint version {d.get('format_version')}")
    n_hidden = len(d["arch"]["hidden_dims"]) + 1  # feature layer included
    blobs = d["params"]
    params = ModelParams(
        hidden_w=[_decode_array(blobs[f"h{i}.w"]) for i in range(n_hidden)],
        hidden_b=[_decode_array(blobs[f"h{i}.b"]) for i in range(n_hidden)],
        head_w=_decode_array(blobs["head.w"]),
        head_b=_decode_array(blobs["head.b"]),
    )
    return Checkpoint(
        params=params,
        config=RunConfig.from_dict(d["config"]),
        iteration=int(d["iteration"]),
        phase=d["phase"],
    )


def checkpoint_to_json(ck: Checkpoint) -> str:
    return json.dumps(checkpoint_to_dict(ck), sort_keys=True, separators=(",", ":")) + "\n"


def save_checkpoint(ck: Checkpoint, path):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(checkpoint_to_json(ck))
    except OSError as e:
        raise FmdaError(f"failed writing checkpoint {path}: {e}") from e


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return checkpoint_from_dict(json.load(fh))
    except OSError as e:
        raise FmdaError(f"failed reading checkpoint {path}: {e}") from e
