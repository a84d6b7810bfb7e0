"""Per-frame promptable segmentation engine.

The engine owns no neural code. It drives two injected contracts, a
``Detector`` for prompt-conditioned initialization and a ``Tracker`` for mask
propagation, and routes each frame to one of them according to the state
controller. Visual prompts skip presence gating and start tracking on the
prompt frame; linguistic prompts go through the entry gate and are
cross-checked against the detector while tracking.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .dataset import Masklet
from .errors import ConfigError, DataError, StateError
from .features import Embedder
from .geometry import as_mask, empty_mask
from .memory import MemoryBank, MemoryConfig, MemoryEntry, make_entry
from .transition import AstConfig, AstController, Event, State

LEVELS = ("whole", "part", "subpart")


# -- prompts -----------------------------------------------------------------


@dataclass(frozen=True)
class PointsPrompt:
    points: tuple[tuple[int, int, int], ...]  # (x, y, label); label 1 positive, 0 negative
    frame_index: int = 0


@dataclass(frozen=True)
class BoxPrompt:
    box: tuple[int, int, int, int]  # x0, y0, x1, y1 (inclusive-exclusive)
    frame_index: int = 0


@dataclass(frozen=True, eq=False)
class MaskPrompt:
    mask: np.ndarray
    frame_index: int = 0


@dataclass(frozen=True)
class TextPrompt:
    expression: str

    def __post_init__(self) -> None:
        if not self.expression.strip():
            raise ConfigError("empty referring expression")


@dataclass(frozen=True)
class AudioTranscript:
    expression: str
    source: str = "asr"

    def __post_init__(self) -> None:
        if not self.expression.strip():
            raise ConfigError("empty transcript")


VisualPrompt = PointsPrompt | BoxPrompt | MaskPrompt
Prompt = VisualPrompt | TextPrompt | AudioTranscript

_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_transcript(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT).split())


def is_visual(prompt: Prompt) -> bool:
    return isinstance(prompt, (PointsPrompt, BoxPrompt, MaskPrompt))


# -- contracts ---------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    index: int
    height: int
    width: int
    handle: object = None


@dataclass
class GranularityCandidate:
    mask: np.ndarray
    s_iou: float
    level: str


@dataclass
class DetectorOutput:
    candidates: list[GranularityCandidate]
    s_p: float

    def __post_init__(self) -> None:
        if sorted(c.level for c in self.candidates) != sorted(LEVELS):
            raise DataError("detector must return exactly one candidate per granularity level")
        if not 0.0 <= self.s_p <= 1.0:
            raise DataError(f"presence score {self.s_p} outside [0, 1]")


@dataclass
class TrackerOutput:
    mask: np.ndarray
    s_iou: float
    s_p: float


class Detector(Protocol):
    def detect(self, frame: Frame, expression: str) -> DetectorOutput: ...


class Tracker(Protocol):
    def track(
        self,
        frame: Frame,
        context: Sequence[MemoryEntry],
        init_masks: Sequence[tuple[int, np.ndarray]] | None = None,
    ) -> TrackerOutput: ...


@dataclass
class StepOutput:
    frame_index: int
    mask: np.ndarray
    present: bool
    state: State
    events: list[Event] = field(default_factory=list)
    scores: tuple[float, float] = (0.0, 0.0)


# -- selection rules ---------------------------------------------------------


def select_granularity(out: DetectorOutput) -> GranularityCandidate:
    """Highest s_iou wins; ties go to the coarser level."""
    order = {lvl: i for i, lvl in enumerate(LEVELS)}
    return min(out.candidates, key=lambda c: (-c.s_iou, order[c.level]))


def presence_gate(s_iou: float, s_p: float, cfg: AstConfig) -> bool:
    return s_iou > cfg.delta_iou and s_p > cfg.delta_p


def default_resolver(prompt: VisualPrompt, frame: Frame) -> np.ndarray:
    """Resolve a visual prompt without an oracle: masks as-is, boxes as filled rectangles."""
    if isinstance(prompt, MaskPrompt):
        return as_mask(prompt.mask)
    if isinstance(prompt, BoxPrompt):
        x0, y0, x1, y1 = prompt.box
        m = empty_mask(frame.height, frame.width)
        m[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = True
        return m
    raise ConfigError("point prompts need a resolver (no prompt encoder is available)")


# -- engine ------------------------------------------------------------------


class Engine:
    """One engine tracks one target in one video."""

    def __init__(
        self,
        detector: Detector | None,
        tracker: Tracker,
        embedder: Embedder,
        prompt: Prompt,
        ast_config: AstConfig | None = None,
        memory_config: MemoryConfig | None = None,
        exit_gate: bool = True,
        resolver: Callable[[VisualPrompt, Frame], np.ndarray] | None = None,
        normalize: bool = True,
    ):
        if prompt is None:
            raise StateError("engine requires a prompt")
        self.prompt = prompt
        self.visual = is_visual(prompt)
        if not self.visual and detector is None:
            raise ConfigError("linguistic prompts require a detector")
        self.detector = detector
        self.tracker = tracker
        self.embedder = embedder
        self.ast_config = ast_config or AstConfig()
        self.memory = MemoryBank(memory_config or MemoryConfig())
        self.exit_gate = exit_gate and not self.visual
        self.resolver = resolver or default_resolver
        self.events: list[Event] = []
        self._pending: list[Event] = []
        self.controller = AstController(self.ast_config, emit=self._pending.append)
        if isinstance(prompt, AudioTranscript) and normalize:
            self.expression = normalize_transcript(prompt.expression)
        elif isinstance(prompt, (TextPrompt, AudioTranscript)):
            self.expression = prompt.expression
        else:
            self.expression = None

    def _emit(self, frame: int, event: str, **detail) -> None:
        self._pending.append(Event(frame, event, detail))

    def _entry(self, frame_index: int, feature, mask, s_iou: float) -> MemoryEntry:
        return make_entry(frame_index, feature, mask, s_iou, self.memory.config.pooling_grid)

    def _remember(self, frame: Frame, mask: np.ndarray, s_iou: float) -> None:
        entry = self._entry(frame.index, self.embedder.embed(frame), mask, s_iou)
        self.memory.push_short_term(entry)
        commit = self.memory.offer_candidate(entry)
        if commit is not None:
            self._emit(
                frame.index,
                "commit",
                inserted=commit.inserted.frame_index,
                evicted=None if commit.evicted is None else commit.evicted.frame_index,
            )

    def _gated_detection(self, frame: Frame) -> tuple[GranularityCandidate, float, bool]:
        out = self.detector.detect(frame, self.expression)
        best = select_granularity(out)
        return best, out.s_p, presence_gate(best.s_iou, out.s_p, self.ast_config)

    def _track(self, frame: Frame, init_masks=None) -> tuple[np.ndarray, bool, tuple[float, float]]:
        out = self.tracker.track(frame, self.memory.assemble_context(), init_masks)
        # Presence head on the tracker side: occluded / absent targets emit nothing.
        present = out.s_p > self.ast_config.delta_p
        mask = as_mask(out.mask) if present else empty_mask(frame.height, frame.width)
        self._remember(frame, mask, out.s_iou)
        return mask, present, (out.s_iou, out.s_p)

    def _detect_step(self, frame: Frame, detection=None) -> StepOutput:
        best, s_p, present = detection if detection is not None else self._gated_detection(frame)
        mask = best.mask if present else empty_mask(frame.height, frame.width)
        self._emit(
            frame.index, "detect", s_iou=best.s_iou, s_p=s_p, level=best.level, present=present
        )
        feature = self.embedder.embed(frame)
        top = self.controller.observe_detection(best.s_iou, s_p, frame.index, mask=best.mask, payload=feature)
        if top is None:
            return StepOutput(frame.index, mask, present, State.DETECTING, scores=(best.s_iou, s_p))
        self.memory.reset()
        self.memory.initial = [self._entry(o.frame_index, o.payload, o.mask, o.s_iou) for o in top]
        init = [(o.frame_index, o.mask) for o in top]
        mask, present, scores = self._track(frame, init)
        return StepOutput(frame.index, mask, present, State.TRACKING, scores=scores)

    def _visual_step(self, frame: Frame) -> StepOutput:
        start = self.prompt.frame_index
        if self.controller.state is State.DETECTING:
            if frame.index < start:
                return StepOutput(frame.index, empty_mask(frame.height, frame.width), False, State.DETECTING)
            init = as_mask(self.resolver(self.prompt, frame))
            self.controller.activate_direct(frame.index)
            self.memory.reset()
            self.memory.initial = [self._entry(frame.index, self.embedder.embed(frame), init, 1.0)]
            self._emit(frame.index, "visual_init", area=int(np.count_nonzero(init)))
            mask, present, scores = self._track(frame, [(frame.index, init)])
            return StepOutput(frame.index, mask, present, State.TRACKING, scores=scores)
        mask, present, scores = self._track(frame)
        return StepOutput(frame.index, mask, present, State.TRACKING, scores=scores)

    def _tracking_step(self, frame: Frame) -> StepOutput:
        mask, present, scores = self._track(frame)
        if self.exit_gate and self.controller.observe_tracking(frame.index):
            detection = self._gated_detection(frame)
            best, _, det_present = detection
            m_det = best.mask if det_present else empty_mask(frame.height, frame.width)
            if self.controller.record_vote(mask, m_det, frame.index):
                # The tracker mask was just rejected; report the detector's view
                # and let this detection seed the fresh entry window.
                self.memory.reset()
                return self._detect_step(frame, detection)
        return StepOutput(frame.index, mask, present, State.TRACKING, scores=scores)

    def step(self, frame: Frame) -> StepOutput:
        if self.visual:
            out = self._visual_step(frame)
        elif self.controller.state is State.DETECTING:
            out = self._detect_step(frame)
        else:
            out = self._tracking_step(frame)
        if not out.present:
            out.mask = empty_mask(frame.height, frame.width)
        out.events = self._pending[:]
        self.events.extend(out.events)
        self._pending.clear()
        return out

    def run_video(self, frames: Sequence[Frame], masklet_id: str = "pred") -> tuple[Masklet, list[Event]]:
        if len(frames) == 0:
            raise DataError("run_video needs at least one frame")
        h, w = frames[0].height, frames[0].width
        masks = {}
        for frame in frames:
            out = self.step(frame)
            if out.present:
                masks[frame.index] = out.mask
        return Masklet(masklet_id, len(frames), h, w, masks), list(self.events)
