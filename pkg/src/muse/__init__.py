"""Story-to-screen orchestration with a verify-and-revise closed loop.

A short story prompt goes in; a run directory of shot-level artifacts
comes out: scene canvases, chunked clips, and voice tracks, each accepted
by a critic or shipped as the best attempt a bounded budget could buy.
"""

from .loop import LoopConfig
from .memory import StateMemory
from .model import Script, Segment, UserPrompt
from .orchestrator import StoryBundle, run_story

__version__ = "0.1.0"

__all__ = [
    "LoopConfig",
    "Script",
    "Segment",
    "StateMemory",
    "StoryBundle",
    "UserPrompt",
    "run_story",
    "__version__",
]
