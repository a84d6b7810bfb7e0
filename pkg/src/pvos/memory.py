"""Three-tier tracking memory.

* ``initial``: entries recorded at activation (one for a visual prompt, the
  Top-K window frames for a linguistic one).
* ``short_term``: FIFO of the most recent frames.
* ``long_term``: bounded, diversity-managed store fed through a candidate pool
  of high-confidence frames. The pool commits one entry when full: the
  candidate least similar to the previously committed entry. At capacity the
  stored entry most similar to the newcomer is replaced.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyPoolError, ShapeError, StateError
from .features import arg_most_dissimilar, arg_most_similar, as_feature
from .geometry import as_mask, boundary_map


@dataclass(frozen=True)
class MemoryConfig:
    short_capacity: int = 7
    long_capacity: int = 16
    pool_capacity: int = 5
    gamma_iou: float = 0.8
    pooling_grid: int = 4
    # "similarity" replaces the most similar stored entry; "fifo" is the
    # oldest-first baseline kept for comparison.
    eviction: str = "similarity"

    def __post_init__(self) -> None:
        for name in ("short_capacity", "long_capacity", "pool_capacity", "pooling_grid"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.gamma_iou < 1.0:
            raise ConfigError("gamma_iou must lie in (0, 1)")
        if self.eviction not in ("similarity", "fifo"):
            raise ConfigError(f"unknown eviction policy {self.eviction!r}")


@dataclass(eq=False)
class MemoryEntry:
    frame_index: int
    feature: np.ndarray
    mask: np.ndarray
    boundary: np.ndarray
    fused: np.ndarray
    s_iou: float


@dataclass
class CommitEvent:
    inserted: MemoryEntry
    evicted: MemoryEntry | None = None


def _cell_edges(n: int, g: int) -> np.ndarray:
    # Start offsets of g near-equal cells covering [0, n).
    return (np.arange(g) * n) // g


def _pool(m: np.ndarray, g: int) -> np.ndarray:
    h, w = m.shape
    if h % g == 0 and w % g == 0:
        counts = m.reshape(g, h // g, g, w // g).sum(axis=(1, 3), dtype=np.int64)
        return (counts / ((h // g) * (w // g))).ravel()
    if g > h or g > w:
        raise ShapeError(f"pooling grid {g} exceeds mask shape {m.shape}")
    rows, cols = _cell_edges(h, g), _cell_edges(w, g)
    sums = np.add.reduceat(np.add.reduceat(m.astype(np.int64), rows, axis=0), cols, axis=1)
    heights = np.diff(np.append(rows, h))
    widths = np.diff(np.append(cols, w))
    return (sums / np.outer(heights, widths)).ravel()


def fuse_entry(feature, mask, boundary, g: int) -> np.ndarray:
    """Boundary-aware memory vector.

    Concatenates the image feature with g x g average-pooled occupancy of the
    mask and of its boundary map, so the vector changes whenever either
    geometry changes in any pooled cell.
    """
    mask, boundary = as_mask(mask), as_mask(boundary)
    if mask.shape != boundary.shape:
        raise ShapeError(f"mask {mask.shape} and boundary {boundary.shape} differ")
    return np.concatenate([as_feature(feature), _pool(mask, g), _pool(boundary, g)])


def make_entry(frame_index: int, feature, mask, s_iou: float, g: int) -> MemoryEntry:
    mask = as_mask(mask)
    feature = as_feature(feature)
    boundary = boundary_map(mask)
    return MemoryEntry(
        frame_index=int(frame_index),
        feature=feature,
        mask=mask,
        boundary=boundary,
        fused=fuse_entry(feature, mask, boundary, g),
        s_iou=float(s_iou),
    )


@dataclass
class MemoryBank:
    config: MemoryConfig = field(default_factory=MemoryConfig)
    initial: list[MemoryEntry] | None = None
    short_term: deque = field(default_factory=deque)
    long_term: list[MemoryEntry] = field(default_factory=list)
    pool: list[MemoryEntry] = field(default_factory=list)
    last_inserted: MemoryEntry | None = None
    # Insertion order of long-term entries, used only by the FIFO baseline.
    _arrival: list[int] = field(default_factory=list, repr=False)
    _clock: int = field(default=0, repr=False)

    def reset(self) -> None:
        self.initial = None
        self.short_term.clear()
        self.long_term.clear()
        self.pool.clear()
        self.last_inserted = None
        self._arrival.clear()

    def push_short_term(self, entry: MemoryEntry) -> None:
        self.short_term.append(entry)
        while len(self.short_term) > self.config.short_capacity:
            self.short_term.popleft()

    def offer_candidate(self, entry: MemoryEntry) -> CommitEvent | None:
        # Strict inequality: a frame exactly at gamma_iou is not high-confidence.
        if not entry.s_iou > self.config.gamma_iou:
            return None
        self.pool.append(entry)
        if len(self.pool) < self.config.pool_capacity:
            return None
        event = self.commit_long_term(self.pool)
        self.pool.clear()
        return event

    def commit_long_term(self, pool: list[MemoryEntry] | None = None) -> CommitEvent:
        pool = self.pool if pool is None else pool
        if not pool:
            raise EmptyPoolError("commit with an empty candidate pool")
        if self.last_inserted is None or not self.long_term:
            p_in = pool[0]
        else:
            p_in = pool[arg_most_dissimilar(self.last_inserted.feature, [p.feature for p in pool])]

        evicted = None
        if len(self._arrival) != len(self.long_term):
            # long_term was assigned directly; take list order as arrival order.
            self._arrival = list(range(-len(self.long_term), 0))
        self._clock += 1
        if len(self.long_term) < self.config.long_capacity:
            self.long_term.append(p_in)
            self._arrival.append(self._clock)
        else:
            if self.config.eviction == "fifo":
                slot = int(np.argmin(self._arrival))
            else:
                slot = arg_most_similar(p_in.feature, [h.feature for h in self.long_term])
            evicted = self.long_term[slot]
            self.long_term[slot] = p_in
            self._arrival[slot] = self._clock
        self.last_inserted = p_in
        return CommitEvent(inserted=p_in, evicted=evicted)

    def assemble_context(self) -> list[MemoryEntry]:
        if self.initial is None:
            raise StateError("memory bank has no initial entries; tracking is not active")
        seen: set[int] = set()
        out: list[MemoryEntry] = []
        for entry in (*self.initial, *self.long_term, *self.short_term):
            if entry.frame_index in seen:
                continue
            seen.add(entry.frame_index)
            out.append(entry)
        return out

    def dump(self) -> list[dict]:
        """Debug view: one record per stored entry, tagged with its tier."""
        rows = []
        tiers = (
            ("initial", self.initial or []),
            ("long_term", self.long_term),
            ("short_term", self.short_term),
            ("pool", self.pool),
        )
        for tier, entries in tiers:
            for e in entries:
                rows.append({"frame_index": e.frame_index, "s_iou": e.s_iou, "tier": tier})
        return rows
