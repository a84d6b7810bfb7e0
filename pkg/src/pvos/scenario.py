"""Deterministic synthetic scenes and scripted detector/tracker oracles.

A scene is a set of rectangles and discs moving along piecewise-linear
trajectories, each visible during configured frame intervals. Each frame also
gets a feature vector taken from a cluster keyed by the pose bucket of the
first visible object, so memory diversity has a known ground truth.

All randomness goes through SplitMix64 streams keyed by (seed, purpose, frame),
which keeps every output a pure function of the configuration.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .dataset import Masklet
from .errors import ConfigError
from .geometry import erode, iou
from .pipeline import (
    BoxPrompt,
    DetectorOutput,
    Frame,
    GranularityCandidate,
    MaskPrompt,
    PointsPrompt,
    TrackerOutput,
    default_resolver,
)
from .rng import SplitMix64

FEATURE_NOISE = 0.05
SIDES = ("left", "right")


def _intervals(raw, n: int, what: str) -> tuple[tuple[int, int], ...]:
    out = []
    for pair in raw:
        if len(pair) != 2:
            raise ConfigError(f"{what}: intervals are [start, end) pairs")
        a, b = int(pair[0]), int(pair[1])
        if not 0 <= a <= b <= n:
            raise ConfigError(f"{what}: interval [{a}, {b}) outside [0, {n})")
        out.append((a, b))
    return tuple(out)


def _inside(t: int, intervals) -> bool:
    return any(a <= t < b for a, b in intervals)


@dataclass(frozen=True)
class SceneObject:
    id: str
    category: str
    shape: str  # "rectangle" (size = (w, h)) or "disc" (size = (radius,))
    size: tuple[float, ...]
    trajectory: tuple[tuple[float, float, float], ...]  # (frame, cx, cy) waypoints
    visible: tuple[tuple[int, int], ...]
    side: str | None = None
    pose_buckets: tuple[tuple[int, int, str], ...] = ()

    def center(self, t: int) -> tuple[float, float]:
        pts = self.trajectory
        if t <= pts[0][0]:
            return pts[0][1], pts[0][2]
        for (f0, x0, y0), (f1, x1, y1) in zip(pts, pts[1:]):
            if f0 <= t <= f1:
                a = 0.0 if f1 == f0 else (t - f0) / (f1 - f0)
                return x0 + a * (x1 - x0), y0 + a * (y1 - y0)
        return pts[-1][1], pts[-1][2]

    def bucket(self, t: int) -> str | None:
        for a, b, key in self.pose_buckets:
            if a <= t < b:
                return key
        return None


@dataclass(frozen=True)
class ScriptedDetectorConfig:
    target: str | None = None  # object id; None means resolve from the expression
    iou_noise: float = 0.05
    presence_noise: float = 0.05
    hallucinations: tuple[tuple[int, int], ...] = ()
    misses: tuple[tuple[int, int], ...] = ()
    # Presence score emitted with hallucinated masks; None means "confidently wrong".
    hallucination_presence: float | None = None
    target_level: str = "whole"


@dataclass(frozen=True)
class TrackerConfig:
    kind: str = "oracle"  # "oracle" or "drifting"
    drift_onset: int | None = None
    drift_velocity: tuple[float, float] = (0.0, 0.0)
    score_decay: float = 1.0
    # When False, re-initialization after onset cures the drift for good.
    recurring: bool = False


@dataclass(frozen=True)
class SceneConfig:
    seed: int
    width: int
    height: int
    num_frames: int
    objects: tuple[SceneObject, ...]
    feature_clusters: dict[str, tuple[float, ...]] = field(default_factory=dict)
    feature_dim: int = 16
    name: str = "scene"
    dataset: str = "synthetic"
    fps: float = 1.0
    detector: ScriptedDetectorConfig = ScriptedDetectorConfig()
    tracker: TrackerConfig = TrackerConfig()
    prompts: tuple[dict, ...] = ()


def scene_config_from_dict(d: dict) -> SceneConfig:
    try:
        width, height = (int(v) for v in d["frame_size"])
        n = int(d["num_frames"])
        if width < 1 or height < 1 or n < 1:
            raise ConfigError("frame_size and num_frames must be positive")
        objects = []
        for o in d.get("objects", []):
            oid = str(o["id"])
            shape = o.get("shape", "rectangle")
            size = tuple(float(v) for v in (o["size"] if isinstance(o["size"], list) else [o["size"]]))
            if shape == "rectangle" and (len(size) != 2 or min(size) <= 0):
                raise ConfigError(f"object {oid}: rectangle size is [w, h] with positive entries")
            if shape == "disc" and (len(size) != 1 or size[0] <= 0):
                raise ConfigError(f"object {oid}: disc size is a positive radius")
            if shape not in ("rectangle", "disc"):
                raise ConfigError(f"object {oid}: unknown shape {shape!r}")
            traj = tuple(tuple(float(v) for v in p) for p in o["trajectory"])
            if not traj or any(len(p) != 3 for p in traj):
                raise ConfigError(f"object {oid}: trajectory is a list of [frame, cx, cy]")
            if any(b[0] < a[0] for a, b in zip(traj, traj[1:])):
                raise ConfigError(f"object {oid}: trajectory frames must be non-decreasing")
            side = o.get("side")
            if side is not None and side not in SIDES:
                raise ConfigError(f"object {oid}: side must be 'left' or 'right'")
            buckets = tuple((int(a), int(b), str(k)) for a, b, k in o.get("pose_buckets", []))
            objects.append(
                SceneObject(
                    id=oid,
                    category=str(o.get("category", "object")),
                    shape=shape,
                    size=size,
                    trajectory=traj,
                    visible=_intervals(o.get("visible", [[0, n]]), n, f"object {oid}"),
                    side=side,
                    pose_buckets=buckets,
                )
            )
        if len({o.id for o in objects}) != len(objects):
            raise ConfigError("object ids must be unique")
        det = d.get("detector", {})
        detector = ScriptedDetectorConfig(
            target=None if det.get("target") is None else str(det["target"]),
            iou_noise=float(det.get("iou_noise", 0.05)),
            presence_noise=float(det.get("presence_noise", 0.05)),
            hallucinations=_intervals(det.get("hallucinations", []), n, "hallucinations"),
            misses=_intervals(det.get("misses", []), n, "misses"),
            hallucination_presence=det.get("hallucination_presence"),
            target_level=det.get("target_level", "whole"),
        )
        trk = d.get("tracker", {})
        onset = trk.get("drift_onset")
        tracker = TrackerConfig(
            kind=trk.get("kind", "oracle"),
            drift_onset=None if onset is None else int(onset),
            drift_velocity=tuple(float(v) for v in trk.get("drift_velocity", [0.0, 0.0])),
            score_decay=float(trk.get("score_decay", 1.0)),
            recurring=bool(trk.get("recurring", False)),
        )
        if tracker.kind not in ("oracle", "drifting"):
            raise ConfigError(f"unknown tracker kind {tracker.kind!r}")
        if tracker.drift_onset is not None and tracker.drift_onset < 0:
            raise ConfigError("drift_onset must be non-negative")
        clusters = {str(k): tuple(float(x) for x in v) for k, v in d.get("feature_clusters", {}).items()}
        dim = int(d.get("feature_dim", len(next(iter(clusters.values()))) if clusters else 16))
        if any(len(v) != dim for v in clusters.values()):
            raise ConfigError("feature clusters must all have feature_dim entries")
        return SceneConfig(
            seed=int(d.get("seed", 0)),
            width=width,
            height=height,
            num_frames=n,
            objects=tuple(objects),
            feature_clusters=clusters,
            feature_dim=dim,
            name=str(d.get("name", "scene")),
            dataset=str(d.get("dataset", "synthetic")),
            fps=float(d.get("fps", 1.0)),
            detector=detector,
            tracker=tracker,
            prompts=tuple(d.get("prompts", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scene config: {exc!r}") from exc


# -- generation --------------------------------------------------------------


def rasterize(obj: SceneObject, t: int, height: int, width: int) -> np.ndarray:
    cx, cy = obj.center(t)
    m = np.zeros((height, width), dtype=bool)
    if obj.shape == "rectangle":
        w, h = int(round(obj.size[0])), int(round(obj.size[1]))
        x0 = math.floor(cx - w / 2)
        y0 = math.floor(cy - h / 2)
        m[max(0, y0) : max(0, y0 + h), max(0, x0) : max(0, x0 + w)] = True
    else:
        r = obj.size[0]
        ys, xs = np.ogrid[:height, :width]
        m[(xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2 <= r * r] = True
    return m


def _unit_cluster(seed: int, key: str, dim: int) -> np.ndarray:
    rng = SplitMix64.stream(seed, "cluster", key)
    while True:
        v = np.array([rng.uniform(-1.0, 1.0) for _ in range(dim)])
        n = float(np.sqrt(np.dot(v, v)))
        if n > 1e-6:
            return v / n


@dataclass
class Scene:
    config: SceneConfig
    gt: dict[str, Masklet]
    features: np.ndarray  # (num_frames, dim)

    @property
    def frames(self) -> list[Frame]:
        c = self.config
        return [Frame(t, c.height, c.width, self) for t in range(c.num_frames)]

    def object(self, oid: str):
        for o in self.config.objects:
            if o.id == oid:
                return o
        return None

    def visible(self, oid: str, t: int) -> bool:
        return t in self.gt[oid].masks


def frame_bucket(cfg: SceneConfig, t: int) -> str:
    for o in cfg.objects:
        if _inside(t, o.visible):
            key = o.bucket(t)
            if key is not None:
                return key
    return "background"


def generate_scene(cfg: SceneConfig) -> Scene:
    gt = {}
    for o in cfg.objects:
        masks = {}
        for t in range(cfg.num_frames):
            if _inside(t, o.visible):
                masks[t] = rasterize(o, t, cfg.height, cfg.width)
        gt[o.id] = Masklet(o.id, cfg.num_frames, cfg.height, cfg.width, masks, category=o.category)

    clusters: dict[str, np.ndarray] = {k: np.asarray(v) for k, v in cfg.feature_clusters.items()}
    dim = cfg.feature_dim
    # Each component perturbed by at most FEATURE_NOISE / sqrt(dim): total norm <= FEATURE_NOISE.
    amp = FEATURE_NOISE / math.sqrt(dim)
    feats = np.empty((cfg.num_frames, dim))
    for t in range(cfg.num_frames):
        key = frame_bucket(cfg, t)
        if key not in clusters:
            clusters[key] = _unit_cluster(cfg.seed, key, dim)
        rng = SplitMix64.stream(cfg.seed, "feature", t)
        feats[t] = clusters[key] + np.array([rng.uniform(-amp, amp) for _ in range(dim)])
    return Scene(cfg, gt, feats)


class SceneEmbedder:
    def __init__(self, scene: Scene):
        self.scene = scene

    def embed(self, frame: Frame) -> np.ndarray:
        return self.scene.features[frame.index]


# -- prompt resolution -------------------------------------------------------


def resolve_expression(scene: Scene, expression: str) -> str | None:
    """Map a referring expression to an object id, or None for a negative query.

    The category must appear in the expression; a directional word ("left" /
    "right") must also match the object's side tag.
    """
    text = " ".join(re.findall(r"[a-z]+", expression.lower()))
    words = set(text.split())
    side = next((s for s in SIDES if s in words), None)
    matches = []
    for o in scene.config.objects:
        cat = " ".join(re.findall(r"[a-z]+", o.category.lower()))
        if not cat or f" {cat} " not in f" {text} ":
            continue
        if side is not None and o.side != side:
            continue
        matches.append(o)
    return matches[0].id if matches else None


def resolve_visual_prompt(scene: Scene, prompt, frame: Frame) -> np.ndarray:
    """Snap a point or box prompt to the ground-truth object it indicates."""
    if isinstance(prompt, MaskPrompt):
        return default_resolver(prompt, frame)
    t = frame.index
    visible = [o.id for o in scene.config.objects if scene.visible(o.id, t)]
    if isinstance(prompt, PointsPrompt):
        best, best_hits = None, 0
        for oid in visible:
            m = scene.gt[oid].masks[t]
            hits = sum(
                1 if (lab and 0 <= y < frame.height and 0 <= x < frame.width and m[y, x]) else 0
                for x, y, lab in prompt.points
            )
            if hits > best_hits:
                best, best_hits = oid, hits
        if best is None:
            raise ConfigError(f"no object under the positive points at frame {t}")
        return scene.gt[best].masks[t].copy()
    if isinstance(prompt, BoxPrompt):
        box = default_resolver(prompt, frame)
        scored = [(iou(box, scene.gt[oid].masks[t]), oid) for oid in visible]
        scored = [s for s in scored if s[0] > 0]
        if not scored:
            return box
        best = max(scored, key=lambda s: s[0])[1]
        return scene.gt[best].masks[t].copy()
    raise ConfigError(f"unsupported visual prompt {type(prompt).__name__}")


# -- scripted oracles --------------------------------------------------------


def _clamp(v: float) -> float:
    return min(1.0, max(0.0, v))


class ScriptedDetector:
    """Detector oracle with scripted noise, misses, and hallucinations.

    With the target visible it returns the true mask as the whole-level
    candidate and 1- and 2-step erosions as part/subpart. When the target is
    absent (or the query is negative) candidates are empty and the presence
    score is at noise level, except inside hallucination windows where another
    object's mask (or a central decoy) is returned with high quality scores.
    """

    def __init__(self, cfg: ScriptedDetectorConfig, scene: Scene, expression: str | None = None):
        self.cfg = cfg
        self.scene = scene
        if cfg.target is not None:
            self.target = cfg.target if cfg.target in scene.gt else None
        elif expression is not None:
            self.target = resolve_expression(scene, expression)
        else:
            self.target = None
        self.calls = 0

    def _draws(self, t: int) -> tuple[float, float]:
        rng = SplitMix64.stream(self.scene.config.seed, "detector", t)
        return rng.random(), rng.random()

    def _decoy(self, t: int) -> np.ndarray:
        c = self.scene.config
        for o in c.objects:
            if o.id != self.target and self.scene.visible(o.id, t):
                return self.scene.gt[o.id].masks[t]
        m = np.zeros((c.height, c.width), dtype=bool)
        h, w = max(1, c.height // 8), max(1, c.width // 8)
        y0, x0 = (c.height - h) // 2, (c.width - w) // 2
        m[y0 : y0 + h, x0 : x0 + w] = True
        return m

    def _candidates(self, whole: np.ndarray, score: float) -> list[GranularityCandidate]:
        part = erode(whole)
        sub = erode(part)
        masks = {"whole": whole, "part": part, "subpart": sub}
        offset = {"whole": 0.0, "part": 0.0, "subpart": 0.0}
        # Non-target levels are scripted as clearly worse.
        order = ["whole", "part", "subpart"]
        k = order.index(self.cfg.target_level)
        for i, lvl in enumerate(order):
            offset[lvl] = 0.3 * abs(i - k)
        return [GranularityCandidate(masks[l], _clamp(score - offset[l]), l) for l in order]

    def detect(self, frame: Frame, expression: str | None = None) -> DetectorOutput:
        self.calls += 1
        t = frame.index
        u_iou, u_p = self._draws(t)
        c = self.cfg
        if self.target is not None and self.scene.visible(self.target, t) and not _inside(t, c.misses):
            whole = self.scene.gt[self.target].masks[t]
            return DetectorOutput(
                self._candidates(whole, _clamp(1 - c.iou_noise * u_iou)), _clamp(1 - c.presence_noise * u_p)
            )
        target_absent = self.target is None or not self.scene.visible(self.target, t)
        if target_absent and _inside(t, c.hallucinations):
            s_iou = max(0.9, _clamp(1 - c.iou_noise * u_iou))
            if c.hallucination_presence is None:
                s_p = max(0.9, _clamp(1 - c.presence_noise * u_p))
            else:
                s_p = float(c.hallucination_presence)
            return DetectorOutput(self._candidates(self._decoy(t), s_iou), s_p)
        empty = np.zeros((frame.height, frame.width), dtype=bool)
        low = _clamp(c.iou_noise * u_iou)
        return DetectorOutput(
            [GranularityCandidate(empty, low, lvl) for lvl in ("whole", "part", "subpart")],
            _clamp(c.presence_noise * u_p),
        )


def translate(m: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift a mask; pixels leaving the frame are dropped."""
    h, w = m.shape
    out = np.zeros_like(m)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src = m[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
    out[max(0, dy) : max(0, dy) + src.shape[0], max(0, dx) : max(0, dx) + src.shape[1]] = src
    return out


class OracleTracker:
    """Follows whichever ground-truth object best overlaps its initialization.

    If the init mask overlaps no object (e.g. a decoy hallucination) the mask
    is held static.
    """

    def __init__(self, scene: Scene):
        self.scene = scene
        self.follow: str | None = None
        self.static: np.ndarray | None = None
        self.calls = 0

    def _init(self, init_masks: Sequence[tuple[int, np.ndarray]]) -> None:
        t, mask = max(init_masks, key=lambda p: p[0])
        best, best_iou = None, 0.0
        for o in self.scene.config.objects:
            score = iou(mask, self.scene.gt[o.id].mask_at(t)) if self.scene.visible(o.id, t) else 0.0
            if score > best_iou:
                best, best_iou = o.id, score
        self.follow = best
        self.static = None if best is not None else np.asarray(mask, dtype=bool).copy()

    def track(self, frame: Frame, context, init_masks=None) -> TrackerOutput:
        self.calls += 1
        if init_masks:
            self._init(init_masks)
        if self.follow is None:
            if self.static is None:
                return TrackerOutput(np.zeros((frame.height, frame.width), dtype=bool), 0.0, 0.0)
            return TrackerOutput(self.static.copy(), 1.0, 1.0)
        if self.scene.visible(self.follow, frame.index):
            return TrackerOutput(self.scene.gt[self.follow].masks[frame.index], 1.0, 1.0)
        return TrackerOutput(np.zeros((frame.height, frame.width), dtype=bool), 1.0, 0.0)


class DriftingTracker(OracleTracker):
    """Oracle tracker whose output slides away from the target after an onset frame."""

    def __init__(self, cfg: TrackerConfig, scene: Scene):
        super().__init__(scene)
        self.cfg = cfg
        self.anchor = cfg.drift_onset
        self.cured = False

    def track(self, frame: Frame, context, init_masks=None) -> TrackerOutput:
        t = frame.index
        if init_masks and self.anchor is not None and t > self.anchor:
            if self.cfg.recurring:
                self.anchor = t
            else:
                self.cured = True
        out = super().track(frame, context, init_masks)
        if self.anchor is None or self.cured or t < self.anchor:
            return out
        steps = t - self.anchor
        vx, vy = self.cfg.drift_velocity
        moved = translate(out.mask, int(round(vx * steps)), int(round(vy * steps)))
        return TrackerOutput(moved, out.s_iou * self.cfg.score_decay**steps, out.s_p)


def scripted_detector(cfg: ScriptedDetectorConfig, scene: Scene, expression: str | None = None) -> ScriptedDetector:
    return ScriptedDetector(cfg, scene, expression)


def drifting_tracker(cfg: TrackerConfig, scene: Scene) -> DriftingTracker:
    return DriftingTracker(cfg, scene)


def make_tracker(cfg: TrackerConfig, scene: Scene) -> OracleTracker:
    if cfg.kind == "drifting":
        return DriftingTracker(cfg, scene)
    return OracleTracker(scene)


def default_prompts(scene: Scene) -> list[dict[str, Any]]:
    """A text prompt and a 3-point visual prompt at first appearance, per object."""
    prompts = []
    for o in scene.config.objects:
        expr = " ".join(p for p in (o.side, o.category) if p)
        prompts.append({"id": f"{o.id}-text", "masklet_id": o.id, "modality": "text", "payload": expr})
        present = scene.gt[o.id].present_frames()
        if not present:
            continue
        t = present[0]
        ys, xs = np.nonzero(scene.gt[o.id].masks[t])
        n = len(ys)
        pts = [[int(xs[i]), int(ys[i]), 1] for i in (n // 4, n // 2, (3 * n) // 4)]
        prompts.append(
            {"id": f"{o.id}-points", "masklet_id": o.id, "modality": "visual-points", "payload": pts, "frame_index": t}
        )
    return prompts
