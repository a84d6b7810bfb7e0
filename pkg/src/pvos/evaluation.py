"""Masklet and dataset metrics: J, F, J&F, presence precision/FPR, FPS."""

from __future__ import annotations

import csv
import io
from decimal import ROUND_HALF_UP, Decimal
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import Manifest, Masklet
from .errors import AlignmentError, CoverageError, DomainError
from .geometry import boundary_f, iou, jf_mean


class EvalProtocol(str, Enum):
    # Visual prompts are scored from the prompt frame onward, linguistic
    # prompts over the whole video whether or not the target is visible.
    FROM_PROMPT_FRAME = "prompt-frame"
    FROM_FIRST_FRAME = "first-frame"


@dataclass(frozen=True)
class MaskletMetrics:
    J: float
    F: float
    JF: float
    frames_evaluated: int


@dataclass(frozen=True)
class PresenceMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def fpr(self) -> float | None:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else None


def _check_aligned(pred: Masklet, gt: Masklet) -> None:
    if (pred.frame_count, pred.height, pred.width) != (gt.frame_count, gt.height, gt.width):
        raise AlignmentError(
            f"masklets disagree: pred {pred.frame_count}x{pred.height}x{pred.width}, "
            f"gt {gt.frame_count}x{gt.height}x{gt.width}"
        )


def frame_range(gt: Masklet, protocol: EvalProtocol, prompt_frame: int | None) -> range:
    if protocol is EvalProtocol.FROM_FIRST_FRAME:
        return range(gt.frame_count)
    if prompt_frame is None:
        raise AlignmentError("prompt-frame protocol requires the prompt frame index")
    if not 0 <= prompt_frame < gt.frame_count:
        raise AlignmentError(f"prompt frame {prompt_frame} outside the video")
    return range(prompt_frame, gt.frame_count)


def eval_masklet(
    pred: Masklet,
    gt: Masklet,
    protocol: EvalProtocol = EvalProtocol.FROM_FIRST_FRAME,
    prompt_frame: int | None = None,
    tolerance: int | None = None,
) -> MaskletMetrics:
    _check_aligned(pred, gt)
    frames = frame_range(gt, protocol, prompt_frame)
    js, fs = [], []
    for t in frames:
        p, g = pred.mask_at(t), gt.mask_at(t)
        js.append(iou(p, g))
        fs.append(boundary_f(p, g, tolerance))
    if not js:
        return MaskletMetrics(1.0, 1.0, 1.0, 0)
    j = float(np.mean(js))
    f = float(np.mean(fs))
    return MaskletMetrics(j, f, jf_mean(j, f), len(js))


def presence_metrics(pred: Masklet, gt: Masklet, frames: range | None = None) -> PresenceMetrics:
    """Frame-level presence classification: a frame is 'present' iff its mask is nonempty."""
    _check_aligned(pred, gt)
    tp = fp = tn = fn = 0
    for t in frames if frames is not None else range(gt.frame_count):
        p = t in pred.masks
        g = t in gt.masks
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return PresenceMetrics(tp, fp, tn, fn)


def fps_report(frame_count: int, wall_seconds: float) -> float:
    if wall_seconds <= 0:
        raise DomainError("wall time must be positive")
    return frame_count / wall_seconds


# -- dataset level -----------------------------------------------------------

CSV_COLUMNS = ("dataset", "video", "masklet_id", "granularity", "J", "F", "JF", "precision", "fpr", "frames")


@dataclass
class EvalRow:
    dataset: str
    video: str
    masklet_id: str
    granularity: str
    metrics: MaskletMetrics
    presence: PresenceMetrics


@dataclass
class DatasetAggregate:
    dataset: str
    J: float
    F: float
    JF: float
    precision: float | None
    fpr: float | None
    frames: int
    count: int


def default_protocol(modality: str) -> EvalProtocol:
    return EvalProtocol.FROM_PROMPT_FRAME if modality.startswith("visual") else EvalProtocol.FROM_FIRST_FRAME


def eval_dataset(
    manifest: Manifest,
    predictions: Manifest,
    protocol: EvalProtocol | None = None,
    tolerance: int | None = None,
) -> tuple[list[EvalRow], list[DatasetAggregate]]:
    """Score every prediction against its ground-truth masklet.

    ``protocol=None`` picks per prompt: prompt-frame for visual prompts,
    first-frame for linguistic ones. A prediction without a source masklet (a
    negative query) is scored against an all-empty masklet.
    """
    rows: list[EvalRow] = []
    for video in manifest.videos:
        pvideo = predictions.video(video.id)
        preds = pvideo.masklets if pvideo is not None else []
        covered = {p.source_masklet for p in preds}
        for m in video.masklets:
            if m.id not in covered:
                raise CoverageError(f"{video.id}/{m.id}: no prediction")
        prompts = {p.id: p for p in video.prompts}
        for pred in preds:
            prompt = prompts.get(pred.prompt_id)
            if prompt is None:
                raise CoverageError(f"{video.id}/{pred.id}: unknown prompt {pred.prompt_id!r}")
            if pred.source_masklet is None:
                gt = Masklet(pred.source_masklet or "", video.frame_count, video.height, video.width)
                granularity = pred.granularity
            else:
                gt = video.masklet(pred.source_masklet)
                if gt is None:
                    raise CoverageError(f"{video.id}/{pred.id}: unknown masklet {pred.source_masklet!r}")
                granularity = gt.granularity
            proto = protocol or default_protocol(prompt.modality)
            start = prompt.frame_index if prompt.frame_index is not None else 0
            metrics = eval_masklet(pred, gt, proto, start, tolerance)
            pres = presence_metrics(pred, gt, frame_range(gt, proto, start))
            rows.append(EvalRow(video.dataset or manifest.dataset, video.id, pred.id, granularity, metrics, pres))
    return rows, aggregate(rows, manifest.dataset)


def _mean(values: list[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def aggregate(rows: list[EvalRow], default_dataset: str = "") -> list[DatasetAggregate]:
    """Unweighted per-masklet means, one aggregate per dataset in first-seen order."""
    groups: dict[str, list[EvalRow]] = {}
    for r in rows:
        groups.setdefault(r.dataset, []).append(r)
    if not groups:
        groups[default_dataset] = []
    out = []
    for name, rs in groups.items():
        out.append(
            DatasetAggregate(
                dataset=name,
                J=_mean([r.metrics.J for r in rs]) or 0.0,
                F=_mean([r.metrics.F for r in rs]) or 0.0,
                JF=_mean([r.metrics.JF for r in rs]) or 0.0,
                precision=_mean([r.presence.precision for r in rs]),
                fpr=_mean([r.presence.fpr for r in rs]),
                frames=sum(r.metrics.frames_evaluated for r in rs),
                count=len(rs),
            )
        )
    return out


def format_half_up(v: float, places: int) -> str:
    """Round half-up after snapping away float noise (82.35 -> "82.4", not "82.3")."""
    d = Decimal(repr(round(v, 9)))
    return str(d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def format_pct(v: float) -> str:
    return format_half_up(100 * v, 1)


def _pct(v: float | None) -> str:
    return "" if v is None else format_pct(v)


def render_csv(rows: list[EvalRow], aggregates: list[DatasetAggregate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        m, p = r.metrics, r.presence
        w.writerow(
            [r.dataset, r.video, r.masklet_id, r.granularity, _pct(m.J), _pct(m.F), _pct(m.JF),
             _pct(p.precision), _pct(p.fpr), m.frames_evaluated]
        )
    for a in aggregates:
        w.writerow([a.dataset, "ALL", "ALL", "", _pct(a.J), _pct(a.F), _pct(a.JF), _pct(a.precision), _pct(a.fpr), a.frames])
    return buf.getvalue()
