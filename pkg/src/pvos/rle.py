"""Uncompressed COCO-style run-length encoding.

Pixels are scanned column-major; ``counts`` alternates zero-runs and one-runs
and always starts with a (possibly empty) zero-run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .geometry import as_mask


@dataclass(frozen=True)
class RLE:
    height: int
    width: int
    counts: tuple[int, ...]

    def to_json(self) -> str:
        return " ".join(map(str, self.counts))

    @classmethod
    def from_json(cls, text: str, height: int, width: int) -> "RLE":
        try:
            counts = tuple(int(c) for c in text.split())
        except ValueError as exc:
            raise FormatError(f"non-integer RLE count in {text[:40]!r}") from exc
        return cls(height, width, counts)


def rle_encode(m) -> RLE:
    m = as_mask(m)
    h, w = m.shape
    flat = m.ravel(order="F").astype(np.int8)
    # Positions where the value changes, framed by a leading 0 so the first
    # run is always a zero-run.
    change = np.flatnonzero(np.diff(np.concatenate(([0], flat, [1 - flat[-1]]))))
    runs = np.diff(np.concatenate(([0], change)))
    counts = runs.tolist()
    if counts and counts[-1] == 0:
        counts.pop()
    return RLE(h, w, tuple(int(c) for c in counts))


def rle_decode(r: RLE) -> np.ndarray:
    if r.height < 1 or r.width < 1:
        raise FormatError(f"invalid RLE size {(r.height, r.width)}")
    counts = np.asarray(r.counts, dtype=np.int64)
    if counts.size == 0:
        raise FormatError("RLE has no counts")
    if np.any(counts < 0) or np.any(counts[1:] == 0):
        raise FormatError("RLE counts must be non-negative and only the first may be zero")
    total = int(counts.sum())
    if total != r.height * r.width:
        raise FormatError(f"RLE counts sum to {total}, expected {r.height * r.width}")
    values = np.zeros(counts.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((r.height, r.width), order="F")
