"""Binary mask primitives.

Masks are 2D numpy boolean arrays of shape ``(height, width)``. Pixels outside
the frame are treated as unset by every morphological operator, so objects
touching the image border get a boundary along the border.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "CROSS3",
    "Element",
    "as_mask",
    "boundary_f",
    "boundary_map",
    "default_tolerance",
    "dilate",
    "empty_mask",
    "erode",
    "iou",
    "jf_mean",
    "square",
]


@dataclass(frozen=True)
class Element:
    """Structuring element: the 3x3 cross, or a square (Chebyshev ball) of a radius."""

    kind: str
    radius: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("cross3", "square"):
            raise ValueError(f"unknown structuring element {self.kind!r}")
        if self.radius < 0:
            raise DomainError("radius must be non-negative")


CROSS3 = Element("cross3", 1)


def square(radius: int) -> Element:
    return Element("square", int(radius))


def as_mask(m) -> np.ndarray:
    arr = np.asarray(m)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"mask must be a non-empty 2D array, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        arr = arr.astype(bool)
    return arr


def empty_mask(height: int, width: int) -> np.ndarray:
    return np.zeros((height, width), dtype=bool)


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def iou(a, b) -> float:
    """Region similarity. Two empty masks score 1.0."""
    a, b = _check_pair(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def _window_or(m: np.ndarray, r: int, axis: int) -> np.ndarray:
    n = m.shape[axis]
    r = min(r, n)
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    p = np.pad(m, pad)
    out = np.zeros_like(m)
    for k in range(2 * r + 1):
        out |= p[k : k + n] if axis == 0 else p[:, k : k + n]
    return out


def _window_and(m: np.ndarray, r: int, axis: int) -> np.ndarray:
    n = m.shape[axis]
    if r >= n:
        return np.zeros_like(m)
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    p = np.pad(m, pad)
    out = m.copy()
    for k in range(2 * r + 1):
        out &= p[k : k + n] if axis == 0 else p[:, k : k + n]
    return out


def _shifted(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Up/down/left/right neighbours with unset pixels shifted in."""
    p = np.pad(m, 1)
    return p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]


def dilate(m, radius: int, element: Element | None = None) -> np.ndarray:
    """Dilate by a square of ``radius`` (or by ``element`` when given)."""
    m = as_mask(m)
    if radius < 0:
        raise DomainError("radius must be non-negative")
    if element is not None and element.kind == "cross3":
        up, down, left, right = _shifted(m)
        return m | up | down | left | right
    r = element.radius if element is not None else radius
    if r == 0 or not m.any():
        return m.copy()
    return _window_or(_window_or(m, r, 0), r, 1)


def erode(m, element: Element = CROSS3) -> np.ndarray:
    m = as_mask(m)
    if element.kind == "cross3":
        up, down, left, right = _shifted(m)
        return m & up & down & left & right
    if element.radius == 0:
        return m.copy()
    return _window_and(_window_and(m, element.radius, 0), element.radius, 1)


def boundary_map(m) -> np.ndarray:
    """Inner boundary: the mask minus its cross-3 erosion."""
    m = as_mask(m)
    return m & ~erode(m, CROSS3)


def default_tolerance(height: int, width: int) -> int:
    return max(1, int(round(0.008 * math.hypot(height, width))))


def boundary_f(pred, gt, tolerance: int | None = None) -> float:
    """Boundary F-measure with Chebyshev-distance matching."""
    pred, gt = _check_pair(pred, gt)
    if tolerance is None:
        tolerance = default_tolerance(*gt.shape)
    if tolerance < 0:
        raise DomainError("tolerance must be non-negative")
    bp = boundary_map(pred)
    bg = boundary_map(gt)
    n_pred = np.count_nonzero(bp)
    n_gt = np.count_nonzero(bg)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    precision = np.count_nonzero(bp & dilate(bg, tolerance)) / n_pred
    recall = np.count_nonzero(bg & dilate(bp, tolerance)) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def jf_mean(j: float, f: float) -> float:
    if not (0.0 <= j <= 1.0 and 0.0 <= f <= 1.0):
        raise DomainError(f"J and F must lie in [0, 1], got ({j}, {f})")
    return (j + f) / 2
