"""Synthetic domain-shift benchmarks: Gaussian class blobs plus an affine target shift.

The severity knob s controls the shift applied to the target generative
process: a rotation of s * 15 degrees in a random 2-D subspace, a per-class
translation of s unit offsets, and a scaling of 1 + 0.2 * s. At s = 0 the
two domains are identical distributions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, asdict
from importlib import resources

import numpy as np

from .config import (
    STREAM_GEN_EXTRA,
    STREAM_GEN_GEOMETRY,
    STREAM_GEN_MEANS,
    STREAM_GEN_SOURCE,
    STREAM_GEN_TARGET,
)
from .datasets import LabeledDataset
from .errors import ConfigurationError, FmdaError
from .numeric import RngStream

ROTATION_DEG_PER_SEVERITY = 15.0
SCALE_PER_SEVERITY = 0.2


@dataclass(frozen=True)
class ShiftSpec:
    """Parameters of one benchmark: class geometry, sample counts, shift severity."""

    n_classes: int = 6
    dim: int = 16
    source_per_class: int = 500
    target_per_class: int = 200
    severity: float = 2.0
    cov_scale: float = 1.0     # within-class standard deviation
    mean_scale: float = 1.0    # spread of the random class means
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.n_classes >= 2, "n_classes must be >= 2"),
            (self.dim >= 2, "dim must be >= 2"),
            (self.source_per_class >= 1, "source_per_class must be >= 1"),
            (self.target_per_class >= 1, "target_per_class must be >= 1"),
            (self.severity >= 0, "severity must be >= 0"),
            (self.cov_scale > 0, "cov_scale must be > 0"),
            (self.mean_scale > 0, "mean_scale must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigurationError(msg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown shift-spec keys: {', '.join(unknown)}")
        return cls(**d)


@dataclass
class GeneratedPair:
    source: LabeledDataset
    target: LabeledDataset
    spec: ShiftSpec | None = None


def _class_geometry(spec: ShiftSpec):
    means_rng = RngStream(spec.seed, STREAM_GEN_MEANS)
    means = spec.mean_scale * means_rng.normal(size=(spec.n_classes, spec.dim))
    geo = RngStream(spec.seed, STREAM_GEN_GEOMETRY)
    v1 = geo.normal(size=spec.dim)
    v2 = geo.normal(size=spec.dim)
    # Orthonormal basis of the rotation plane (Gram-Schmidt; no LAPACK so the
    # result only depends on the draws).
    e1 = v1 / np.sqrt(np.sum(v1 * v1))
    u2 = v2 - np.sum(v2 * e1) * e1
    e2 = u2 / np.sqrt(np.sum(u2 * u2))
    # Heterogeneous per-class shift. A seeded attractor class pulls half of
    # the classes into its neighborhood (a many-to-one confusion no
    # classifier head can undo on its own, while the crowded classes stay
    # mutually separated in input space); the remaining classes translate
    # along a shared direction orthogonal to the class constellation, which
    # barely disturbs their classification.
    domain_dir = geo.normal(size=spec.dim)
    domain_dir /= np.linalg.norm(domain_dir)
    perm = geo.permutation(spec.n_classes)
    attractor = int(perm[0])
    movers = set(int(k) for k in perm[1 : 1 + spec.n_classes // 2])
    offsets = np.zeros_like(means)
    for c in range(spec.n_classes):
        if c in movers:
            toward = means[attractor] - means[c]
            offsets[c] = toward / np.linalg.norm(toward)
        else:
            offsets[c] = domain_dir
    return means, e1, e2, offsets


def _blob_samples(means, per_class, cov_scale, rng):
    n_classes, dim = means.shape
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    noise = rng.normal(size=(n_classes * per_class, dim))
    return means[labels] + cov_scale * noise, labels


def _rotate_in_plane(x, e1, e2, angle):
    # R x = x + (cos a - 1)((x.e1) e1 + (x.e2) e2) + sin a ((x.e1) e2 - (x.e2) e1)
    c = np.cos(angle) - 1.0
    s = np.sin(angle)
    p1 = np.sum(x * e1, axis=1, keepdims=True)
    p2 = np.sum(x * e2, axis=1, keepdims=True)
    return x + c * (p1 * e1 + p2 * e2) + s * (p1 * e2 - p2 * e1)


def generate(spec: ShiftSpec) -> GeneratedPair:
    """Sample the source and target datasets for one benchmark.

    The target set applies the spec's affine shift to fresh draws from the
    source generative process. Deterministic given spec.seed.
    """
    means, e1, e2, offsets = _class_geometry(spec)
    xs, ys = _blob_samples(
        means, spec.source_per_class, spec.cov_scale, RngStream(spec.seed, STREAM_GEN_SOURCE)
    )
    zt, yt = _blob_samples(
        means, spec.target_per_class, spec.cov_scale, RngStream(spec.seed, STREAM_GEN_TARGET)
    )
    if spec.severity > 0:
        angle = np.radians(ROTATION_DEG_PER_SEVERITY * spec.severity)
        scale = 1.0 + SCALE_PER_SEVERITY * spec.severity
        xt = scale * _rotate_in_plane(zt, e1, e2, angle) + spec.severity * offsets[yt]
    else:
        xt = zt
    source = LabeledDataset(xs, ys, "source", np.arange(len(ys)))
    target = LabeledDataset(xt, yt, "target", np.arange(len(yt)))
    return GeneratedPair(source=source, target=target, spec=spec)


def extra_source_samples(spec: ShiftSpec, per_class: int) -> LabeledDataset:
    """Held-out draw from the source generative process (its own noise stream)."""
    if per_class < 1:
        raise ConfigurationError("per_class must be >= 1")
    means, _, _, _ = _class_geometry(spec)
    x, y = _blob_samples(means, per_class, spec.cov_scale, RngStream(spec.seed, STREAM_GEN_EXTRA))
    return LabeledDataset(x, y, "source", np.arange(len(y)))


def export_csv(dataset: LabeledDataset, path):
    """Write `id,domain,label,f_0..f_{D-1}` rows ordered by id.

    Feature values use shortest round-trip formatting, so a load followed by
    a re-export is byte-identical.
    """
    order = np.argsort(dataset.ids)
    header = "id,domain,label," + ",".join(f"f_{j}" for j in range(dataset.dim))
    lines = [header]
    for p in order:
        feats = ",".join(repr(float(v)) for v in dataset.features[p])
        lines.append(f"{int(dataset.ids[p])},{dataset.domain},{int(dataset.labels[p])},{feats}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as e:
        raise FmdaError(f"failed writing dataset {path}: {e}") from e


def load_csv(path, domain: str | None = None) -> LabeledDataset:
    """Read a dataset written by export_csv. `domain` is only needed for
    header-only files."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln]
    except OSError as e:
        raise FmdaError(f"failed reading dataset {path}: {e}") from e
    if not lines:
        raise ConfigurationError(f"{path} is empty (missing header)")
    cols = lines[0].split(",")
    if cols[:3] != ["id", "domain", "label"]:
        raise ConfigurationError(f"{path} does not match the dataset CSV format")
    dim = len(cols) - 3
    ids, labels, feats = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3 + dim:
            raise ConfigurationError(f"{path}: row has {len(parts)} columns, expected {3 + dim}")
        ids.append(int(parts[0]))
        if domain is None:
            domain = parts[1]
        labels.append(int(parts[2]))
        feats.append([float(v) for v in parts[3:]])
    return LabeledDataset(
        features=np.array(feats, dtype=np.float64).reshape(len(ids), dim),
        labels=np.array(labels, dtype=np.int64),
        domain=domain if domain is not None else "source",
        ids=np.array(ids, dtype=np.int64),
    )


def load_preset(name: str) -> ShiftSpec:
    """Load a frozen benchmark spec shipped with the package."""
    try:
        text = resources.files("fmda").joinpath(f"presets/{name}.json").read_text("utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"unknown preset {name!r}") from None
    payload = json.loads(text)
    payload.pop("preset_version", None)
    return ShiftSpec.from_dict(payload)


def standard_spec(**overrides) -> ShiftSpec:
    """The frozen standard benchmark (6 classes, 16-D, severity 2)."""
    spec = load_preset("standard")
    if overrides:
        spec = ShiftSpec.from_dict({**spec.to_dict(), **overrides})
    return spec
