"""Macro-F1 evaluation reports and small analysis helpers."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .errors import ConfigurationError, UsageError
from .model import ModelParams, forward


@dataclass
class EvalReport:
    """Confusion matrix plus per-class and macro scores for one evaluation."""

    confusion: np.ndarray      # (C, C) counts, rows = truth, cols = prediction
    precision: np.ndarray      # (C,)
    recall: np.ndarray         # (C,)
    f1: np.ndarray             # (C,)
    macro_f1: float
    missing_classes: tuple     # classes with zero test support (scored F1 = 0)
    method: str = ""
    n: int | None = None
    trial: int | None = None
    iteration: int | None = None

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "macro_f1": self.macro_f1,
            "missing_classes": list(self.missing_classes),
            "method": self.method,
            "n": self.n,
            "trial": self.trial,
            "iteration": self.iteration,
        }


def macro_f1(predictions, labels, n_classes: int, **meta) -> EvalReport:
    """Unweighted mean of per-class F1 over all n_classes.

    A class with no true and no predicted samples scores F1 = 0; classes
    absent from the test set are flagged in missing_classes.
    """
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(labels, dtype=np.int64)
    if preds.ndim != 1 or truth.ndim != 1 or preds.shape != truth.shape:
        raise ConfigurationError("predictions and labels must be equal-length vectors")
    if preds.size == 0:
        raise UsageError("macro_f1 on empty input")
    for name, arr in (("predictions", preds), ("labels", truth)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ConfigurationError(f"{name} must lie in [0, {n_classes})")

    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, preds), 1)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    precision = np.divide(tp, tp + fp, out=np.zeros(n_classes), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros(n_classes), where=(tp + fn) > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(n_classes), where=pr > 0)
    missing = tuple(int(c) for c in np.flatnonzero(cm.sum(axis=1) == 0))
    if missing:
        warnings.warn(f"classes {missing} have no test support; F1 scored as 0", RuntimeWarning)
    return EvalReport(
        confusion=cm,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(f1.mean()),
        missing_classes=missing,
        **meta,
    )


def predict(params: ModelParams, x) -> np.ndarray:
    """Class predictions: argmax of the softmax rows (lowest index on ties)."""
    return forward(params, x).probs.argmax(axis=1)


def evaluate_model(params: ModelParams, dataset: LabeledDataset, **meta) -> EvalReport:
    return macro_f1(predict(params, dataset.features), dataset.labels, params.n_classes, **meta)


def degradation_gap(curve) -> float:
    """Peak minus final value of a learning curve; accepts raw values or
    (iteration, value) pairs."""
    arr = np.asarray(curve, dtype=np.float64)
    if arr.size == 0:
        raise UsageError("degradation_gap on an empty curve")
    values = arr[:, 1] if arr.ndim == 2 else arr
    return float(values.max() - values[-1])


def pca_fit(features, k: int = 2):
    """Principal axes via eigendecomposition of the covariance matrix.

    Returns (mean, components) with components of shape (k, D), ordered by
    decreasing variance. Sign convention: in each component the entry of
    largest magnitude is positive, so fits are deterministic.
    """
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigurationError("features must be a 2-D matrix")
    n, d = x.shape
    if k > d:
        raise ConfigurationError(f"cannot extract {k} components from {d}-D features")
    if n < 2:
        raise ConfigurationError("need at least 2 rows to fit a projection")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    comps = eigvecs[:, ::-1][:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return mean, comps


def pca_project(features, mean, components) -> np.ndarray:
    x = np.ascontiguousarray(features, dtype=np.float64)
    return (x - mean) @ components.T
