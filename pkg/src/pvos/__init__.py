"""Promptable video object segmentation orchestration engine.

Decoupled detect-then-track control with presence gating, boundary-aware
diversity memory, and consensus-based fallback, plus the geometry, loss,
dataset and evaluation tooling around it.
"""

from .geometry import boundary_f, boundary_map, dilate, erode, iou, jf_mean
from .memory import MemoryBank, MemoryConfig, MemoryEntry
from .pipeline import Engine, Frame
from .transition import AstConfig, AstController, State

__version__ = "0.1.0"

__all__ = [
    "AstConfig",
    "AstController",
    "Engine",
    "Frame",
    "MemoryBank",
    "MemoryConfig",
    "MemoryEntry",
    "State",
    "boundary_f",
    "boundary_map",
    "dilate",
    "erode",
    "iou",
    "jf_mean",
]
