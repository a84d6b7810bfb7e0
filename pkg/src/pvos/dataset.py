"""Masklet benchmark format: manifest schema, persistence, linking, statistics.

The on-disk layout is documented in FORMAT.md at the repository root.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import FormatError
from .geometry import as_mask, empty_mask, iou
from .rle import RLE, rle_decode, rle_encode

FORMAT_VERSION = "1.0"
MODALITIES = ("visual-points", "visual-box", "visual-mask", "text", "audio-transcript")
GRANULARITIES = ("whole", "part")


@dataclass(eq=False)
class Masklet:
    """One object's per-frame masks. Frames without a (nonempty) mask are absent."""

    id: str
    frame_count: int
    height: int
    width: int
    masks: dict[int, np.ndarray] = field(default_factory=dict)
    category: str | None = None
    granularity: str = "whole"
    prompt_id: str | None = None
    source_masklet: str | None = None

    def __post_init__(self) -> None:
        clean = {}
        for t, m in sorted(self.masks.items()):
            m = as_mask(m)
            if m.shape != (self.height, self.width):
                raise FormatError(f"masklet {self.id}: frame {t} has shape {m.shape}")
            if not 0 <= t < self.frame_count:
                raise FormatError(f"masklet {self.id}: frame {t} outside [0, {self.frame_count})")
            if m.any():
                clean[int(t)] = m
        self.masks = clean

    def mask_at(self, t: int) -> np.ndarray:
        m = self.masks.get(t)
        return m if m is not None else empty_mask(self.height, self.width)

    def present_frames(self) -> list[int]:
        return list(self.masks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Masklet):
            return NotImplemented
        same_meta = (
            self.id,
            self.frame_count,
            self.height,
            self.width,
            self.category,
            self.granularity,
            self.prompt_id,
            self.source_masklet,
        ) == (
            other.id,
            other.frame_count,
            other.height,
            other.width,
            other.category,
            other.granularity,
            other.prompt_id,
            other.source_masklet,
        )
        return (
            same_meta
            and self.masks.keys() == other.masks.keys()
            and all(np.array_equal(self.masks[t], other.masks[t]) for t in self.masks)
        )


@dataclass
class PromptRecord:
    id: str
    masklet_id: str | None
    modality: str
    payload: Any
    frame_index: int | None = None

    @property
    def is_visual(self) -> bool:
        return self.modality.startswith("visual")


@dataclass
class VideoRecord:
    id: str
    width: int
    height: int
    frame_count: int
    fps: float = 1.0
    masklets: list[Masklet] = field(default_factory=list)
    prompts: list[PromptRecord] = field(default_factory=list)
    dataset: str | None = None
    scenario: dict | None = None

    def masklet(self, masklet_id: str) -> Masklet | None:
        for m in self.masklets:
            if m.id == masklet_id:
                return m
        return None


@dataclass
class Manifest:
    dataset: str
    videos: list[VideoRecord] = field(default_factory=list)
    version: str = FORMAT_VERSION

    def video(self, video_id: str) -> VideoRecord | None:
        for v in self.videos:
            if v.id == video_id:
                return v
        return None


# -- serialization ---------------------------------------------------------


def _masklet_to_json(m: Masklet) -> dict:
    out: dict[str, Any] = {
        "id": m.id,
        "category": m.category,
        "granularity": m.granularity,
    }
    if m.prompt_id is not None or m.source_masklet is not None:
        out["prompt_id"] = m.prompt_id
        out["source_masklet"] = m.source_masklet
    out["frames"] = [{"frame": t, "rle": rle_encode(mask).to_json()} for t, mask in m.masks.items()]
    return out


def _prompt_payload_to_json(p: PromptRecord) -> Any:
    if p.modality == "visual-mask" and isinstance(p.payload, np.ndarray):
        return rle_encode(p.payload).to_json()
    return p.payload


def manifest_to_dict(manifest: Manifest) -> dict:
    videos = []
    for v in manifest.videos:
        rec: dict[str, Any] = {
            "id": v.id,
            "width": v.width,
            "height": v.height,
            "frame_count": v.frame_count,
            "fps": v.fps,
        }
        if v.dataset is not None:
            rec["dataset"] = v.dataset
        rec["masklets"] = [_masklet_to_json(m) for m in v.masklets]
        rec["prompts"] = [
            {
                "id": p.id,
                "masklet_id": p.masklet_id,
                "modality": p.modality,
                "payload": _prompt_payload_to_json(p),
                "frame_index": p.frame_index,
            }
            for p in v.prompts
        ]
        if v.scenario is not None:
            rec["scenario"] = v.scenario
        videos.append(rec)
    return {"version": manifest.version, "dataset": manifest.dataset, "videos": videos}


def dumps_manifest(manifest: Manifest) -> str:
    return json.dumps(manifest_to_dict(manifest), indent=1) + "\n"


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    Path(path).write_text(dumps_manifest(manifest), encoding="utf-8")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise FormatError(f"{where}: missing field {key!r}")
    return d[key]


def manifest_from_dict(data: dict) -> Manifest:
    if not isinstance(data, dict):
        raise FormatError("manifest root must be an object")
    version = str(_require(data, "version", "manifest"))
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise FormatError(f"unsupported manifest version {version}")
    videos = []
    seen_videos: set[str] = set()
    for raw in _require(data, "videos", "manifest"):
        vid = str(_require(raw, "id", "video"))
        if vid in seen_videos:
            raise FormatError(f"duplicate video id {vid!r}")
        seen_videos.add(vid)
        width = int(_require(raw, "width", vid))
        height = int(_require(raw, "height", vid))
        frame_count = int(_require(raw, "frame_count", vid))
        masklets = []
        for mraw in raw.get("masklets", []):
            mid = str(_require(mraw, "id", f"{vid} masklet"))
            masks = {}
            last = -1
            for fr in _require(mraw, "frames", f"{vid}/{mid}"):
                t = int(_require(fr, "frame", f"{vid}/{mid}"))
                if t <= last:
                    raise FormatError(f"{vid}/{mid}: frame indices must be strictly increasing")
                last = t
                if t >= frame_count:
                    raise FormatError(f"{vid}/{mid}: frame {t} >= frame_count {frame_count}")
                masks[t] = rle_decode(RLE.from_json(_require(fr, "rle", f"{vid}/{mid}"), height, width))
            granularity = mraw.get("granularity", "whole")
            if granularity not in GRANULARITIES:
                raise FormatError(f"{vid}/{mid}: unknown granularity {granularity!r}")
            masklets.append(
                Masklet(
                    id=mid,
                    frame_count=frame_count,
                    height=height,
                    width=width,
                    masks=masks,
                    category=mraw.get("category"),
                    granularity=granularity,
                    prompt_id=mraw.get("prompt_id"),
                    source_masklet=mraw.get("source_masklet"),
                )
            )
        prompts = []
        for praw in raw.get("prompts", []):
            pid = str(_require(praw, "id", f"{vid} prompt"))
            modality = _require(praw, "modality", f"{vid}/{pid}")
            if modality not in MODALITIES:
                raise FormatError(f"{vid}/{pid}: unknown modality {modality!r}")
            payload = _require(praw, "payload", f"{vid}/{pid}")
            if payload in (None, "", []):
                raise FormatError(f"{vid}/{pid}: empty payload")
            frame_index = praw.get("frame_index")
            if modality.startswith("visual"):
                if frame_index is None or not 0 <= int(frame_index) < frame_count:
                    raise FormatError(f"{vid}/{pid}: visual prompt needs a frame_index inside the video")
            if modality == "visual-mask":
                payload = rle_decode(RLE.from_json(payload, height, width))
            masklet_id = praw.get("masklet_id")
            prompts.append(
                PromptRecord(
                    id=pid,
                    masklet_id=None if masklet_id is None else str(masklet_id),
                    modality=modality,
                    payload=payload,
                    frame_index=None if frame_index is None else int(frame_index),
                )
            )
        videos.append(
            VideoRecord(
                id=vid,
                width=width,
                height=height,
                frame_count=frame_count,
                fps=float(raw.get("fps", 1.0)),
                masklets=masklets,
                prompts=prompts,
                dataset=raw.get("dataset"),
                scenario=raw.get("scenario"),
            )
        )
    return Manifest(dataset=str(data.get("dataset", "")), videos=videos, version=version)


def read_manifest(path: str | Path) -> Manifest:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return manifest_from_dict(data)


def validate_manifest(manifest: Manifest) -> list[str]:
    """Semantic checks beyond what parsing enforces. Returns a list of problems."""
    problems = []
    for v in manifest.videos:
        ids = [m.id for m in v.masklets]
        if len(set(ids)) != len(ids):
            problems.append(f"{v.id}: duplicate masklet ids")
        pids = [p.id for p in v.prompts]
        if len(set(pids)) != len(pids):
            problems.append(f"{v.id}: duplicate prompt ids")
        for p in v.prompts:
            if p.masklet_id is not None and p.masklet_id not in ids:
                problems.append(f"{v.id}/{p.id}: references missing masklet {p.masklet_id!r}")
        if v.fps <= 0:
            problems.append(f"{v.id}: fps must be positive")
    return problems


# -- instance linking ------------------------------------------------------


def _canonical_key(m: np.ndarray) -> int:
    # First set pixel in raster order; unique among pairwise-disjoint masks.
    return int(np.flatnonzero(m.ravel())[0])


def link_instances(
    frames: Sequence[Iterable[np.ndarray]],
    link_threshold: float = 0.5,
    gap_patience: int = 0,
    category: str | None = None,
) -> list[Masklet]:
    """Link per-frame instance masks into masklets.

    Greedy matching between consecutive frames by descending IoU; pairs below
    ``link_threshold`` are not linked. A masklet absent for up to
    ``gap_patience`` frames may still be resumed. Results do not depend on the
    order of masks within a frame.
    """
    tracks: list[dict] = []  # {"masks": {t: mask}, "last": t}
    shape = None
    for t, frame_masks in enumerate(frames):
        current = [as_mask(m) for m in frame_masks]
        current = [m for m in current if m.any()]
        for m in current:
            if shape is None:
                shape = m.shape
            elif m.shape != shape:
                raise FormatError("instance masks must share one frame size")
        for i in range(len(current)):
            for j in range(i + 1, len(current)):
                if np.any(current[i] & current[j]):
                    raise FormatError(f"frame {t}: instance masks overlap")
        current.sort(key=_canonical_key)

        live = [k for k, tr in enumerate(tracks) if t - tr["last"] - 1 <= gap_patience]
        pairs = []
        for k in live:
            prev = tracks[k]["masks"][tracks[k]["last"]]
            for j, m in enumerate(current):
                score = iou(prev, m)
                if score >= link_threshold and score > 0:
                    pairs.append((-score, k, j))
        pairs.sort()
        used_tracks: set[int] = set()
        used_masks: set[int] = set()
        for _, k, j in pairs:
            if k in used_tracks or j in used_masks:
                continue
            used_tracks.add(k)
            used_masks.add(j)
            tracks[k]["masks"][t] = current[j]
            tracks[k]["last"] = t
        for j, m in enumerate(current):
            if j not in used_masks:
                tracks.append({"masks": {t: m}, "last": t})

    n = len(frames)
    h, w = shape if shape is not None else (1, 1)
    return [
        Masklet(id=str(k), frame_count=n, height=h, width=w, masks=tr["masks"], category=category)
        for k, tr in enumerate(tracks)
    ]


# -- statistics ------------------------------------------------------------


@dataclass
class DatasetStats:
    dataset: str
    videos: int = 0
    frames: int = 0
    masklets_whole: int = 0
    masks_whole: int = 0
    masklets_part: int = 0
    masks_part: int = 0
    total_duration: float = 0.0

    @property
    def avg_duration(self) -> float:
        return self.total_duration / self.videos if self.videos else 0.0

    def add(self, other: "DatasetStats") -> None:
        for name in ("videos", "frames", "masklets_whole", "masks_whole", "masklets_part", "masks_part"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.total_duration += other.total_duration


def dataset_stats(manifest: Manifest) -> list[DatasetStats]:
    """Per-dataset counts in first-seen order. An empty manifest gives one zero row."""
    rows: dict[str, DatasetStats] = {}
    for v in manifest.videos:
        name = v.dataset or manifest.dataset
        row = rows.setdefault(name, DatasetStats(name))
        row.videos += 1
        row.frames += v.frame_count
        row.total_duration += v.frame_count / v.fps
        for m in v.masklets:
            if m.granularity == "part":
                row.masklets_part += 1
                row.masks_part += len(m.masks)
            else:
                row.masklets_whole += 1
                row.masks_whole += len(m.masks)
    if not rows:
        return [DatasetStats(manifest.dataset)]
    return list(rows.values())
