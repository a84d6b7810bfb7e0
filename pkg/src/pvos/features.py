"""Frame embeddings and cosine-similarity queries."""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from .errors import DegenerateInputError, EmptyPoolError, ShapeError


class Embedder(Protocol):
    """Maps a frame to a fixed-length feature vector.

    Implementations must return the same vector for the same frame within a run.
    """

    def embed(self, frame) -> np.ndarray: ...


def as_feature(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError(f"feature must be a non-empty 1D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError("feature has non-finite entries")
    return arr


def _norm(v: np.ndarray) -> float:
    n = float(np.sqrt(np.dot(v, v)))
    if n == 0.0:
        raise DegenerateInputError("zero feature vector has no direction")
    return n


def cosine_sim(a, b) -> float:
    a, b = as_feature(a), as_feature(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.size} vs {b.size}")
    s = float(np.dot(a, b)) / (_norm(a) * _norm(b))
    return min(1.0, max(-1.0, s))


def similarities(query, pool: Sequence) -> np.ndarray:
    if len(pool) == 0:
        raise EmptyPoolError("similarity query against an empty pool")
    return np.array([cosine_sim(query, p) for p in pool])


def arg_most_similar(query, pool: Sequence) -> int:
    # np.argmax returns the first maximum, which is the lowest-index tie-break.
    return int(np.argmax(similarities(query, pool)))


def arg_most_dissimilar(query, pool: Sequence) -> int:
    return int(np.argmin(similarities(query, pool)))
