"""The two training phases: supervised pre-training and few-shot adaptation."""

from __future__ import annotations

import numpy as np

from .config import (
    RunConfig,
    STREAM_BATCH,
    STREAM_INIT,
    STREAM_PAIRS,
    STREAM_SHUFFLE,
    trial_stream,
)
from .datasets import LabeledDataset
from .errors import ConfigurationError, LeakageError, UsageError
from .losses import combined_loss, cross_entropy
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
from .metrics import evaluate_model
from .sampling import build_adapt_batch, fixed_pair_map


def _require_all_classes(dataset: LabeledDataset, n_classes: int, role: str):
    present = set(int(c) for c in dataset.classes())
    missing = sorted(set(range(n_classes)) - present)
    if missing:
        raise ConfigurationError(f"{role} is missing class {missing[0]}")


def pretrain(source: LabeledDataset, config: RunConfig, trial: int = 0) -> Checkpoint:
    """Minibatch cross-entropy training on the source set.

    Runs config.pretrain_iters epochs, reshuffling each epoch. Deterministic
    given (config.seed, trial).
    """
    _require_all_classes(source, config.n_classes, "source")
    init_rng = trial_stream(config.seed, trial, STREAM_INIT)
    params = init_model(
        source.dim, config.hidden_dims, config.feature_dim, config.n_classes, init_rng
    )
    state = AdamState.for_params(params)
    shuffle_rng = trial_stream(config.seed, trial, STREAM_SHUFFLE)
    for _ in range(config.pretrain_iters):
        for idx in _epoch_batches(source, config.batch_pretrain, shuffle_rng):
            cache = forward(params, source.features[idx])
            _, grad_logits = cross_entropy(cache.probs, source.labels[idx])
            grads, _ = backward(params, cache, grad_logits=grad_logits)
            adam_step(params, grads, state, config.lr)
    return Checkpoint(
        params=params, config=config, iteration=config.pretrain_iters, phase="pretrain"
    )


def _epoch_batches(dataset, batch_size, rng):
    from .sampling import shuffle_epoch

    return shuffle_epoch(dataset, batch_size, rng)


def adaptation_step_grads(params: ModelParams, batch, config: RunConfig):
    """Loss value and parameter gradients for one adaptation step.

    Gradients of the distance term flow through the source branches as well
    as the target branch (shared feature extractor) unless
    config.detach_source is set.
    """
    cache_t = forward(params, batch.anchors)
    metric = config.method in ("fmda-l2", "fmda-triplet") and config.lam != 0.0
    cache_p = forward(params, batch.positives) if metric else None
    cache_n = (
        forward(params, batch.negatives)
        if metric and config.method == "fmda-triplet"
        else None
    )
    value, g = combined_loss(
        cache_t.probs,
        batch.anchor_labels,
        f_t=cache_t.features if metric else None,
        f_sp=cache_p.features if cache_p is not None else None,
        f_sn=cache_n.features if cache_n is not None else None,
        method=config.method if metric else "finetune",
        lam=config.lam,
        alpha=config.alpha,
        beta=config.beta,
        normalize=config.normalize_features,
    )
    grads, _ = backward(params, cache_t, grad_features=g.f_t, grad_logits=g.logits)
    if metric and not config.detach_source:
        gp, _ = backward(params, cache_p, grad_features=g.f_sp)
        accumulate(grads, gp)
        if cache_n is not None:
            gn, _ = backward(params, cache_n, grad_features=g.f_sn)
            accumulate(grads, gn)
    return value, grads


def _check_fewshot(fewshot: LabeledDataset, config: RunConfig):
    counts = np.bincount(fewshot.labels, minlength=config.n_classes)
    if len(fewshot) != config.n_classes * config.n or np.any(counts != config.n):
        raise ConfigurationError(
            f"few-shot set must hold exactly n={config.n} samples for each of "
            f"{config.n_classes} classes"
        )


def _check_disjoint(fewshot: LabeledDataset, test: LabeledDataset):
    overlap = set(int(i) for i in fewshot.ids) & set(int(i) for i in test.ids)
    if overlap:
        raise LeakageError(
            f"few-shot train ids appear in the evaluation split: {sorted(overlap)[:5]}"
        )


def adapt(
    checkpoint: Checkpoint,
    source: LabeledDataset,
    target_fewshot: LabeledDataset,
    config: RunConfig,
    target_test: LabeledDataset | None = None,
    trial: int = 0,
):
    """Few-shot adaptation from a pre-trained checkpoint.

    Each step draws one anchor/positive/negative batch, minimizes the
    classification loss on the anchors plus lam times the distance loss
    selected by config.method, and updates every parameter with Adam.
    Returns (checkpoint, learning curve); the curve holds
    (step, macro F1 on target_test) every config.eval_every steps.
    """
    if config.method == "without-target":
        raise UsageError("method 'without-target' performs no adaptation")
    if config.method == "dann":
        raise UsageError("use train_dann for the transductive baseline")
    if config.method == "dann-tune":
        from .dann import train_dann_tune

        return train_dann_tune(
            checkpoint, source, target_fewshot, config,
            target_test=target_test, trial=trial,
        )
    _require_all_classes(source, config.n_classes, "source")
    _check_fewshot(target_fewshot, config)
    if target_test is not None:
        _check_disjoint(target_fewshot, target_test)

    params = checkpoint.params.copy()
    state = AdamState.for_params(params)
    batch_rng = trial_stream(config.seed, trial, STREAM_BATCH)
    pair_map = None
    if config.fixed_pairs:
        pair_map = fixed_pair_map(
            target_fewshot, source, trial_stream(config.seed, trial, STREAM_PAIRS)
        )
    curve = []
    for step in range(1, config.adapt_iters + 1):
        batch = build_adapt_batch(target_fewshot, source, batch_rng, pair_map=pair_map)
        _, grads = adaptation_step_grads(params, batch, config)
        adam_step(params, grads, state, config.lr)
        if target_test is not None and step % config.eval_every == 0:
            report = evaluate_model(params, target_test)
            curve.append((step, report.macro_f1))
    ck = Checkpoint(
        params=params, config=config, iteration=config.adapt_iters, phase="adapt"
    )
    return ck, curve
