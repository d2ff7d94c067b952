"""Few-shot subset selection and anchor/positive/negative batch construction."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .errors import ConfigurationError
from .numeric import RngStream


@dataclass(frozen=True)
class FewShotSplit:
    """Ids selected for few-shot training plus the held-out remainder."""

    train_ids: tuple
    test_ids: tuple
    seed: int
    stream_id: int

    def to_dict(self) -> dict:
        return {
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "seed": self.seed,
            "stream_id": self.stream_id,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FewShotSplit":
        return cls(
            train_ids=tuple(int(i) for i in d["train_ids"]),
            test_ids=tuple(int(i) for i in d["test_ids"]),
            seed=int(d["seed"]),
            stream_id=int(d["stream_id"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "FewShotSplit":
        return cls.from_dict(json.loads(text))


@dataclass
class AdaptBatch:
    """One adaptation step's aligned target anchors and source pairs.

    Row i of positives shares the label of anchor i; row i of negatives
    carries a different label. Batch size is 2 per class.
    """

    anchors: np.ndarray
    anchor_labels: np.ndarray
    anchor_ids: np.ndarray
    positives: np.ndarray
    positive_labels: np.ndarray
    positive_ids: np.ndarray
    negatives: np.ndarray
    negative_labels: np.ndarray
    negative_ids: np.ndarray

    def __post_init__(self):
        n_classes = len(np.unique(self.anchor_labels))
        if self.size != 2 * n_classes:
            raise ConfigurationError("adapt batch must hold 2 anchors per class")
        if not np.array_equal(self.anchor_labels, self.positive_labels):
            raise ConfigurationError("positive labels must match anchor labels")
        if np.any(self.anchor_labels == self.negative_labels):
            raise ConfigurationError("negative labels must differ from anchor labels")

    @property
    def size(self) -> int:
        return self.anchors.shape[0]


def draw_fewshot(
    target: LabeledDataset, n: int, rng: RngStream, n_classes: int | None = None
) -> FewShotSplit:
    """Uniform without-replacement draw of n ids per class.

    Deterministic given the stream. Every class must have at least n
    samples; with n_classes given, all classes 0..n_classes-1 must appear.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    present = target.classes()
    if n_classes is not None:
        missing = sorted(set(range(n_classes)) - set(int(c) for c in present))
        if missing:
            raise ConfigurationError(f"target has no samples for class {missing[0]}")
    train = []
    for c in present:
        pool = np.sort(target.ids[target.class_positions(int(c))])
        if len(pool) < n:
            raise ConfigurationError(
                f"class {int(c)} has {len(pool)} target samples, needs n={n}"
            )
        train.extend(int(i) for i in rng.choice(pool, size=n, replace=False))
    train_set = set(train)
    test = [int(i) for i in np.sort(target.ids) if int(i) not in train_set]
    return FewShotSplit(
        train_ids=tuple(sorted(train)),
        test_ids=tuple(test),
        seed=rng.seed,
        stream_id=rng.stream_id,
    )


def fixed_pair_map(
    fewshot: LabeledDataset, source: LabeledDataset, rng: RngStream
) -> dict:
    """Freeze one (positive, negative) source choice per few-shot sample.

    Maps anchor id -> (positive row position, negative row position) in the
    source dataset; used by build_adapt_batch when pairs are not redrawn
    per step.
    """
    out = {}
    classes = fewshot.classes()
    for pos in range(len(fewshot)):
        c = int(fewshot.labels[pos])
        sp = _draw_positive(source, c, rng)
        sn = _draw_negative(source, classes, c, rng)
        out[int(fewshot.ids[pos])] = (sp, sn)
    return out


def _draw_positive(source, c, rng) -> int:
    pool = source.class_positions(c)
    if len(pool) == 0:
        raise ConfigurationError(f"source has no samples for class {c}")
    return int(rng.choice(pool))


def _draw_negative(source, classes, c, rng) -> int:
    others = [int(k) for k in classes if int(k) != c]
    if not others:
        raise ConfigurationError("need at least 2 classes to draw a negative")
    nc = others[int(rng.integers(0, len(others)))]
    pool = source.class_positions(nc)
    if len(pool) == 0:
        raise ConfigurationError(f"source has no samples for class {nc}")
    return int(rng.choice(pool))


def build_adapt_batch(
    fewshot: LabeledDataset,
    source: LabeledDataset,
    rng: RngStream,
    pair_map: dict | None = None,
) -> AdaptBatch:
    """Draw one adaptation batch: 2 anchors per class with aligned pairs.

    Anchors come from the few-shot pool (with replacement only when a class
    has a single sample). Each positive is drawn uniformly from the source
    samples of the anchor's class; each negative first picks one of the
    other classes uniformly, then a sample uniformly within it.
    """
    classes = fewshot.classes()
    if len(classes) < 2:
        raise ConfigurationError("need at least 2 classes to build an adapt batch")
    for c in classes:
        if len(source.class_positions(int(c))) == 0:
            raise ConfigurationError(f"source has no samples for class {int(c)}")

    a_pos, p_pos, n_pos = [], [], []
    for c in classes:
        c = int(c)
        pool = fewshot.class_positions(c)
        if len(pool) >= 2:
            picked = rng.choice(pool, size=2, replace=False)
        else:
            picked = np.array([pool[0], pool[0]])
        for p in picked:
            a_pos.append(int(p))
            if pair_map is not None:
                sp, sn = pair_map[int(fewshot.ids[int(p)])]
            else:
                sp = _draw_positive(source, c, rng)
                sn = _draw_negative(source, classes, c, rng)
            p_pos.append(sp)
            n_pos.append(sn)

    return AdaptBatch(
        anchors=fewshot.features[a_pos].copy(),
        anchor_labels=fewshot.labels[a_pos].copy(),
        anchor_ids=fewshot.ids[a_pos].copy(),
        positives=source.features[p_pos].copy(),
        positive_labels=source.labels[p_pos].copy(),
        positive_ids=source.ids[p_pos].copy(),
        negatives=source.features[n_pos].copy(),
        negative_labels=source.labels[n_pos].copy(),
        negative_ids=source.ids[n_pos].copy(),
    )


def shuffle_epoch(dataset, batch_size: int, rng: RngStream) -> list:
    """Permute all indices and split into consecutive batches (last one short)."""
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    n = dataset if isinstance(dataset, int) else len(dataset)
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]
