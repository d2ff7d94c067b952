"""Gradient-reversal domain-adversarial baselines.

Two variants: a transductive run over the full unlabeled target pool, and a
few-shot variant that augments plain fine-tuning with an adversarial domain
loss. Both share the feature extractor with a small source-vs-target
discriminator trained through a gradient reversal layer.
"""

from __future__ import annotations

import numpy as np

from .config import (
    RunConfig,
    STREAM_BATCH,
    STREAM_DANN_BATCH,
    STREAM_DISC_INIT,
    STREAM_INIT,
    STREAM_PAIRS,
    trial_stream,
)
from .datasets import LabeledDataset
from .errors import ConfigurationError
from .losses import cross_entropy
from .metrics import evaluate_model, predict
from .model import (
    AdamState,
    Checkpoint,
    ModelParams,
    accumulate,
    adam_step,
    backward,
    forward,
    init_model,
)
from .sampling import build_adapt_batch, fixed_pair_map

DISC_HIDDEN = (32,)
DOMAIN_SOURCE, DOMAIN_TARGET = 0, 1


def gradient_reversal_forward(x):
    """Identity; the reversal only acts on the backward pass."""
    return x


def gradient_reversal_backward(upstream, lambda_d: float):
    """Scale the upstream gradient by -lambda_d."""
    if lambda_d < 0:
        raise ConfigurationError("lambda_d must be >= 0")
    return -lambda_d * np.asarray(upstream, dtype=np.float64)


def init_discriminator(feature_dim: int, rng) -> ModelParams:
    """Source-vs-target classifier over features: one hidden ReLU layer + 2-way head."""
    return init_model(feature_dim, DISC_HIDDEN[:-1], DISC_HIDDEN[-1], 2, rng)


def discriminator_accuracy(
    params: ModelParams, disc: ModelParams, source: LabeledDataset, target: LabeledDataset
) -> float:
    """Fraction of pooled samples whose domain the discriminator gets right."""
    feats_s = forward(params, source.features).features
    feats_t = forward(params, target.features).features
    preds = predict(disc, np.vstack([feats_s, feats_t]))
    truth = np.concatenate(
        [np.full(len(source), DOMAIN_SOURCE), np.full(len(target), DOMAIN_TARGET)]
    )
    return float((preds == truth).mean())


def dann_tune_step_grads(params: ModelParams, disc: ModelParams, batch, config: RunConfig):
    """Gradients for one few-shot adversarial step.

    The classification loss uses the target anchors; the domain loss uses
    the batch's source positives against those anchors, flowing into the
    feature extractor through the reversal. Returns
    (cls_loss, domain_loss, model grads, discriminator grads).
    """
    cache_t = forward(params, batch.anchors)
    cache_p = forward(params, batch.positives)
    cls, grad_logits = cross_entropy(cache_t.probs, batch.anchor_labels)

    n_src = cache_p.features.shape[0]
    feats = np.vstack([cache_p.features, cache_t.features])
    domains = np.concatenate(
        [np.full(n_src, DOMAIN_SOURCE), np.full(cache_t.features.shape[0], DOMAIN_TARGET)]
    )
    dcache = forward(disc, gradient_reversal_forward(feats))
    dom, dgrad_logits = cross_entropy(dcache.probs, domains)
    disc_grads, dfeat = backward(disc, dcache, grad_logits=dgrad_logits)

    if config.lambda_d != 0.0:
        rev = gradient_reversal_backward(dfeat, config.lambda_d)
        model_grads, _ = backward(
            params, cache_t, grad_features=rev[n_src:], grad_logits=grad_logits
        )
        gp, _ = backward(params, cache_p, grad_features=rev[:n_src])
        accumulate(model_grads, gp)
    else:
        model_grads, _ = backward(params, cache_t, grad_logits=grad_logits)
    return cls, dom, model_grads, disc_grads


def train_dann_tune(
    checkpoint: Checkpoint,
    source: LabeledDataset,
    target_fewshot: LabeledDataset,
    config: RunConfig,
    target_test: LabeledDataset | None = None,
    trial: int = 0,
):
    """Few-shot fine-tuning with an adversarial domain loss on top.

    Draws the same anchor batches as plain fine-tuning (same stream), so
    with lambda_d = 0 the classifier trajectory is identical to finetune.
    """
    from .train import _check_disjoint, _check_fewshot, _require_all_classes

    _require_all_classes(source, config.n_classes, "source")
    _check_fewshot(target_fewshot, config)
    if target_test is not None:
        _check_disjoint(target_fewshot, target_test)

    params = checkpoint.params.copy()
    state = AdamState.for_params(params)
    disc = init_discriminator(
        params.feature_dim, trial_stream(config.seed, trial, STREAM_DISC_INIT)
    )
    disc_state = AdamState.for_params(disc)
    batch_rng = trial_stream(config.seed, trial, STREAM_BATCH)
    pair_map = None
    if config.fixed_pairs:
        pair_map = fixed_pair_map(
            target_fewshot, source, trial_stream(config.seed, trial, STREAM_PAIRS)
        )
    curve = []
    for step in range(1, config.adapt_iters + 1):
        batch = build_adapt_batch(target_fewshot, source, batch_rng, pair_map=pair_map)
        _, _, model_grads, disc_grads = dann_tune_step_grads(params, disc, batch, config)
        adam_step(params, model_grads, state, config.lr)
        adam_step(disc, disc_grads, disc_state, config.lr)
        if target_test is not None and step % config.eval_every == 0:
            curve.append((step, evaluate_model(params, target_test).macro_f1))
    ck = Checkpoint(
        params=params, config=config, iteration=config.adapt_iters, phase="adapt"
    )
    return ck, curve


def train_dann(
    source: LabeledDataset,
    target: LabeledDataset,
    config: RunConfig,
    init: Checkpoint | None = None,
    trial: int = 0,
    test: LabeledDataset | None = None,
):
    """Transductive adversarial training over the full unlabeled target pool.

    Each step draws a mixed batch (half source, half target), minimizes
    source cross-entropy, and pushes domain-invariant features through the
    reversal. Starts from `init` when given so it shares the pre-trained
    model with the other methods. Target labels are never used for training.
    """
    if len(source) == 0 or len(target) == 0:
        raise ConfigurationError("both domains must be nonempty")
    if source.dim != target.dim:
        raise ConfigurationError("source and target dims differ")
    from .train import _require_all_classes

    _require_all_classes(source, config.n_classes, "source")

    if init is not None:
        params = init.params.copy()
    else:
        params = init_model(
            source.dim, config.hidden_dims, config.feature_dim, config.n_classes,
            trial_stream(config.seed, trial, STREAM_INIT),
        )
    state = AdamState.for_params(params)
    disc = init_discriminator(
        params.feature_dim, trial_stream(config.seed, trial, STREAM_DISC_INIT)
    )
    disc_state = AdamState.for_params(disc)
    rng = trial_stream(config.seed, trial, STREAM_DANN_BATCH)
    half = max(1, config.batch_pretrain // 2)
    curve = []
    for step in range(1, config.adapt_iters + 1):
        si = rng.choice(len(source), size=min(half, len(source)), replace=False)
        ti = rng.choice(len(target), size=min(half, len(target)), replace=False)
        n_src = len(si)
        x = np.vstack([source.features[si], target.features[ti]])
        cache = forward(params, x)
        _, grad_src = cross_entropy(cache.probs[:n_src], source.labels[si])
        grad_logits = np.zeros_like(cache.probs)
        grad_logits[:n_src] = grad_src

        domains = np.concatenate(
            [np.full(n_src, DOMAIN_SOURCE), np.full(len(ti), DOMAIN_TARGET)]
        )
        dcache = forward(disc, gradient_reversal_forward(cache.features))
        _, dgrad_logits = cross_entropy(dcache.probs, domains)
        disc_grads, dfeat = backward(disc, dcache, grad_logits=dgrad_logits)

        grad_features = None
        if config.lambda_d != 0.0:
            grad_features = gradient_reversal_backward(dfeat, config.lambda_d)
        model_grads, _ = backward(
            params, cache, grad_features=grad_features, grad_logits=grad_logits
        )
        adam_step(params, model_grads, state, config.lr)
        adam_step(disc, disc_grads, disc_state, config.lr)
        if test is not None and step % config.eval_every == 0:
            curve.append((step, evaluate_model(params, test).macro_f1))
    ck = Checkpoint(
        params=params, config=config, iteration=config.adapt_iters, phase="adapt"
    )
    return ck, curve
