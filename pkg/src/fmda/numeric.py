"""Dense float64 arithmetic and deterministic random streams.

Conventions pinned here and relied on by the rest of the package:

* matrices are 2-D, row-major (C-order), float64
* randomness comes from counter-based Philox streams addressed by
  (seed, stream_id), so any draw sequence can be replayed exactly
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

# Public alias: a Matrix is a 2-D C-order float64 ndarray.
Matrix = np.ndarray

_MASK64 = (1 << 64) - 1


def as_matrix(x) -> Matrix:
    """Coerce to a C-contiguous float64 2-D array."""
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ConfigurationError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def as_vector(x) -> np.ndarray:
    """Coerce to a contiguous float64 1-D array."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ConfigurationError(f"expected a 1-D vector, got ndim={v.ndim}")
    return v


def matmul(a, b) -> Matrix:
    """Matrix product with explicit shape validation."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def euclidean_distance(u, v) -> float:
    """L2 norm of u - v for equal-length vectors."""
    u = as_vector(u)
    v = as_vector(v)
    if u.shape != v.shape:
        raise ConfigurationError(
            f"euclidean_distance length mismatch: {u.shape[0]} vs {v.shape[0]}"
        )
    return float(np.linalg.norm(u - v))


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax of a single logit vector."""
    z = as_vector(logits)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_rows(logits) -> Matrix:
    """Row-wise softmax with max-subtraction for stability."""
    z = as_matrix(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class RngStream:
    """Counter-based random stream; (seed, stream_id) pins the sequence.

    Distinct stream ids behave as statistically independent generators,
    so per-trial and per-purpose streams can be split off one base seed
    without coordination. Draw sequences are identical across runs for a
    fixed (seed, stream_id).
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size=size)

    def choice(self, a, size=None, replace=True):
        return self.gen.choice(a, size=size, replace=replace)

    def permutation(self, n):
        return self.gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
