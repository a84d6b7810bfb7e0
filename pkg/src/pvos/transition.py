"""Adaptive state transition controller.

Two states. ``DETECTING`` buffers detector observations in a sliding window
and activates tracking once the whole window passes both score gates.
``TRACKING`` asks for a detector cross-check every ``check_interval`` frames;
each check casts a +1/-1 vote into a fixed-length queue and a negative sum over
a full queue sends the controller back to ``DETECTING``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .errors import ConfigError, StateError
from .geometry import iou


class State(str, Enum):
    DETECTING = "detecting"
    TRACKING = "tracking"


@dataclass(frozen=True)
class AstConfig:
    window_size: int = 5
    delta_iou: float = 0.7
    delta_p: float = 0.5
    top_k: int = 3
    check_interval: int = 5
    queue_length: int = 5
    delta_c: float = 0.5

    def __post_init__(self) -> None:
        for name in ("window_size", "top_k", "check_interval", "queue_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.top_k > self.window_size:
            raise ConfigError("top_k cannot exceed window_size")
        # delta_p = 0 is allowed: it disables presence gating for ablations.
        if not 0.0 <= self.delta_p < 1.0:
            raise ConfigError("delta_p must lie in [0, 1)")
        for name in ("delta_iou", "delta_c"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")


@dataclass
class Observation:
    frame_index: int
    s_iou: float
    s_p: float
    mask: Any = None
    payload: Any = None


@dataclass
class Event:
    frame: int
    event: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"frame": self.frame, "event": self.event, "detail": self.detail}


class AstController:
    def __init__(self, config: AstConfig | None = None, emit: Callable[[Event], None] | None = None):
        self.config = config or AstConfig()
        self.emit = emit
        self.state = State.DETECTING
        self.entry_window: deque[Observation] = deque(maxlen=self.config.window_size)
        self.vote_queue: deque[int] = deque(maxlen=self.config.queue_length)
        self.frames_since_check = 0

    def _emit(self, frame: int, event: str, **detail) -> None:
        if self.emit is not None:
            self.emit(Event(frame, event, detail))

    def passes(self, s_iou: float, s_p: float) -> bool:
        return s_iou > self.config.delta_iou and s_p > self.config.delta_p

    def observe_detection(
        self, s_iou: float, s_p: float, frame_index: int, mask=None, payload=None
    ) -> list[Observation] | None:
        """Buffer one detector output; return the Top-K observations on activation."""
        if self.state is not State.DETECTING:
            raise StateError("observe_detection called while tracking")
        self.entry_window.append(Observation(frame_index, float(s_iou), float(s_p), mask, payload))
        if len(self.entry_window) < self.config.window_size:
            return None
        if not all(self.passes(o.s_iou, o.s_p) for o in self.entry_window):
            return None
        # Highest s_iou first; earlier frames win ties.
        ranked = sorted(self.entry_window, key=lambda o: (-o.s_iou, o.frame_index))
        top = ranked[: self.config.top_k]
        self.entry_window.clear()
        self.vote_queue.clear()
        self.state = State.TRACKING
        self.frames_since_check = 0
        self._emit(frame_index, "activation", top_k=[o.frame_index for o in top])
        return top

    def activate_direct(self, frame_index: int) -> None:
        """Enter tracking without the entry gate (visual prompts)."""
        if self.state is not State.DETECTING:
            raise StateError("already tracking")
        self.entry_window.clear()
        self.vote_queue.clear()
        self.state = State.TRACKING
        self.frames_since_check = 0

    def observe_tracking(self, frame_index: int) -> bool:
        """Count a tracked frame; True when a consensus check is due."""
        if self.state is not State.TRACKING:
            raise StateError("observe_tracking called while detecting")
        self.frames_since_check += 1
        if self.frames_since_check >= self.config.check_interval:
            self.frames_since_check = 0
            return True
        return False

    def consensus_score(self) -> int:
        return sum(self.vote_queue)

    def record_vote(self, m_track, m_det, frame_index: int = -1) -> bool:
        """Vote on tracker/detector agreement; True when fallback fires."""
        if self.state is not State.TRACKING:
            raise StateError("record_vote called while detecting")
        overlap = iou(m_track, m_det)
        vote = 1 if overlap >= self.config.delta_c else -1
        self.vote_queue.append(vote)
        score = self.consensus_score()
        full = len(self.vote_queue) == self.config.queue_length
        self._emit(frame_index, "check", iou=overlap, vote=vote, score=score, queue=len(self.vote_queue))
        if full and score < 0:
            self.reset()
            self._emit(frame_index, "fallback", score=score)
            return True
        return False

    def reset(self) -> None:
        self.state = State.DETECTING
        self.entry_window.clear()
        self.vote_queue.clear()
        self.frames_since_check = 0
