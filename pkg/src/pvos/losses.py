"""Training-objective components as pure numpy functions.

Total loss = lambda_m * mask + dice + iou + presence + lambda_b * boundary.
Soft predictions are probabilities in [0, 1] (post-sigmoid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .geometry import as_mask, boundary_map

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_m: float = 20.0
    lambda_b: float = 10.0

    def __post_init__(self) -> None:
        if self.lambda_m < 0 or self.lambda_b < 0:
            raise DomainError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossComponents:
    mask: float
    dice: float
    iou: float
    presence: float
    boundary: float


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = as_mask(gt).astype(np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"prediction {p.shape} and target {g.shape} differ")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise DomainError("soft mask probabilities must lie in [0, 1]")
    return p, g


def _bce(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Clamp only the argument of each log, so exact predictions cost exactly 0.
    pos = -np.log(np.maximum(p, PROB_EPS))
    neg = -np.log(np.maximum(1 - p, PROB_EPS))
    return np.where(g > 0.5, pos, neg)


def mask_loss(pred, gt, alpha: float = 0.25, gamma: float = 2.0, kind: str = "focal") -> float:
    """Mean per-pixel sigmoid focal loss (or plain BCE with ``kind="bce"``).

    ``alpha`` weights positive pixels and ``1 - alpha`` negative ones.
    """
    p, g = _pair(pred, gt)
    ce = _bce(p, g)
    if kind == "bce":
        return float(ce.mean())
    if kind != "focal":
        raise ValueError(f"unknown mask loss kind {kind!r}")
    p_t = p * g + (1 - p) * (1 - g)
    loss = ce * (1 - p_t) ** gamma
    if alpha >= 0:
        loss = (alpha * g + (1 - alpha) * (1 - g)) * loss
    return float(loss.mean())


def dice_loss(pred, gt, smooth: float = 1.0) -> float:
    p, g = _pair(pred, gt)
    inter = float((p * g).sum())
    return 1.0 - (2.0 * inter + smooth) / (float(p.sum()) + float(g.sum()) + smooth)


def iou_loss(predicted_s_iou: float, actual_iou: float) -> float:
    for v in (predicted_s_iou, actual_iou):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"IoU scores must lie in [0, 1], got {v}")
    return abs(predicted_s_iou - actual_iou)


def presence_loss(s_p: float, present: bool) -> float:
    s = float(s_p)
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"presence score {s} outside [0, 1]")
    return -math.log(max(s, PROB_EPS)) if present else -math.log(max(1 - s, PROB_EPS))


def boundary_loss(pred_boundary, gt_mask) -> float:
    """Mean BCE of a predicted boundary map against the mask's inner boundary."""
    p, _ = _pair(pred_boundary, gt_mask)
    target = boundary_map(gt_mask).astype(np.float64)
    return float(_bce(p, target).mean())


def total_loss(
    components: LossComponents,
    weights: LossWeights = LossWeights(),
    target_absent: bool = False,
) -> float:
    """Weighted sum of the five terms.

    ``target_absent`` drops the IoU term, so the quality head is not trained on
    samples where the queried target does not exist.
    """
    c = components
    for name in ("mask", "dice", "iou", "presence", "boundary"):
        if getattr(c, name) < 0:
            raise DomainError(f"loss component {name} is negative")
    iou_term = 0.0 if target_absent else c.iou
    return weights.lambda_m * c.mask + c.dice + iou_term + c.presence + weights.lambda_b * c.boundary
