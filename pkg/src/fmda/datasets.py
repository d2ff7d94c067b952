"""Labeled feature datasets shared by generation, sampling, and training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DOMAINS = ("source", "target")


@dataclass
class LabeledDataset:
    """Feature matrix with integer class labels, a domain tag, and stable ids."""

    features: np.ndarray  # (N, D) float64
    labels: np.ndarray    # (N,) int64, values in [0, C)
    domain: str           # "source" or "target"
    ids: np.ndarray       # (N,) int64, unique per dataset
    _positions_by_class: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ConfigurationError("features must be a 2-D matrix")
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise ConfigurationError("labels length must match feature rows")
        if self.ids.shape != (n,):
            raise ConfigurationError("ids length must match feature rows")
        if n and self.labels.min() < 0:
            raise ConfigurationError("labels must be non-negative")
        if len(np.unique(self.ids)) != n:
            raise ConfigurationError("sample ids must be unique")
        if self.domain not in DOMAINS:
            raise ConfigurationError(f"domain must be one of {DOMAINS}")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def class_positions(self, c: int) -> np.ndarray:
        """Row positions of class c, cached since datasets are not mutated."""
        key = int(c)
        if key not in self._positions_by_class:
            self._positions_by_class[key] = np.flatnonzero(self.labels == key)
        return self._positions_by_class[key]

    def take(self, positions) -> "LabeledDataset":
        pos = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(
            features=self.features[pos].copy(),
            labels=self.labels[pos].copy(),
            domain=self.domain,
            ids=self.ids[pos].copy(),
        )

    def subset_ids(self, wanted) -> "LabeledDataset":
        """Rows for the given ids, in ascending id order."""
        wanted = sorted(int(i) for i in wanted)
        pos_by_id = {int(i): p for p, i in enumerate(self.ids)}
        missing = [i for i in wanted if i not in pos_by_id]
        if missing:
            raise ConfigurationError(f"ids not present in dataset: {missing[:5]}")
        return self.take([pos_by_id[i] for i in wanted])

    def equals(self, other: "LabeledDataset") -> bool:
        return (
            self.domain == other.domain
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )
